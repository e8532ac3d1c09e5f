use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use lesionbench_core::metrics::MorphologyReport;
use lesionbench_core::pipeline::{EditPoint, InitialPrompt, Sign};
use lesionbench_core::propagate::StopReason;
use lesionbench_core::segment::{rle, BBox};
use lesionbench_core::{GrayImage, MaskVolume, WindowSpec};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::state::{unix_seconds, AppState, MaskHandle, StudyMeta};

/// JSON body extractor whose rejections use the service error format.
pub struct Json<T>(pub T);

impl<S, T> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        match axum::Json::<T>::from_request(req, state).await {
            Ok(axum::Json(v)) => Ok(Json(v)),
            Err(e) => Err(ApiError::BadRequest(e.body_text())),
        }
    }
}

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/studies", get(list_studies))
        .route("/studies/{id}/meta", get(study_meta))
        .route("/studies/{id}/slices/{z}", get(slice_png))
        .route("/studies/{id}/segment", post(segment))
        .route("/masks/{id}/edits", post(add_edit))
        .route("/sessions", post(start_session))
        .route("/sessions/{id}/finalize", post(finalize))
        .with_state(state)
}

async fn list_studies(State(state): State<AppState>) -> Json<Vec<StudyMeta>> {
    Json(state.studies().map(|s| s.meta()).collect())
}

async fn study_meta(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<StudyMeta>, ApiError> {
    Ok(Json(state.study(&id)?.meta()))
}

#[derive(Debug, Deserialize)]
pub struct SliceQuery {
    pub window: Option<String>,
}

/// Parses `lo,hi`.
pub fn parse_window(s: &str) -> Result<WindowSpec, ApiError> {
    let bad = || ApiError::BadRequest(format!("window must be lo,hi with lo < hi, got {s:?}"));
    let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    WindowSpec::new(lo, hi).map_err(|_| bad())
}

/// 8-bit grayscale, non-interlaced PNG with default compression.
pub fn encode_png(img: &GrayImage) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer.write_image_data(&img.pixels).expect("in-memory png data");
    }
    out
}

async fn slice_png(
    State(state): State<AppState>,
    Path((id, z)): Path<(String, String)>,
    Query(q): Query<SliceQuery>,
) -> Result<Response, ApiError> {
    let study = state.study(&id)?;
    let z: usize = z.parse().map_err(|_| ApiError::BadRequest(format!("slice index {z:?} is not a number")))?;
    let window = match &q.window {
        Some(w) => parse_window(w)?,
        None => WindowSpec::default(),
    };
    let depth = study.ct.dims()[2];
    if z >= depth {
        return Err(ApiError::NotFound(format!("slice {z} outside 0..{depth}")));
    }
    let img = study.ct.window_slice(z, window).map_err(ApiError::from_pipeline)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], encode_png(&img)).into_response())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptType {
    Point,
    Bbox,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PromptBody {
    #[serde(rename = "type")]
    pub kind: PromptType,
    pub z: usize,
    /// `[x, y]` for a point, `[x0, y0, x1, y1]` for a box.
    pub coords: Vec<usize>,
}

#[derive(Debug, Deserialize)]
pub struct SegmentRequest {
    pub prompt: PromptBody,
    /// Session the new mask is recorded under.
    #[serde(default)]
    pub session: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct EditRequest {
    pub point: [usize; 3],
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRle {
    pub z: usize,
    pub rle: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopReasons {
    pub up: StopReason,
    pub down: StopReason,
}

#[derive(Debug, Serialize)]
pub struct MaskResponse {
    pub mask_id: String,
    pub study: String,
    pub dims: [usize; 3],
    /// Occupied slices only; each run list is over the `width x height` slice.
    pub slices: Vec<SliceRle>,
    pub measurements: MorphologyReport,
    pub stop_reasons: StopReasons,
    pub n_edits: usize,
    /// Set when the last edit left the mask unchanged.
    pub no_effect: bool,
}

pub fn mask_slices(mask: &MaskVolume) -> Vec<SliceRle> {
    mask.occupied_slices().into_iter().map(|z| SliceRle { z, rle: rle::encode(&mask.slice(z)) }).collect()
}

fn respond(h: &MaskHandle, no_effect: bool) -> MaskResponse {
    MaskResponse {
        mask_id: h.id.clone(),
        study: h.study.clone(),
        dims: h.mask.dims(),
        slices: mask_slices(&h.mask),
        measurements: h.report,
        stop_reasons: StopReasons { up: h.stops.0, down: h.stops.1 },
        n_edits: h.edits.len(),
        no_effect,
    }
}

fn initial_prompt(p: &PromptBody, dims: [usize; 3]) -> Result<InitialPrompt, ApiError> {
    let [w, h, d] = dims;
    if p.z >= d {
        return Err(ApiError::BadRequest(format!("prompt slice {} outside 0..{d}", p.z)));
    }
    match (&p.kind, p.coords.as_slice()) {
        (PromptType::Point, &[x, y]) => {
            if x >= w || y >= h {
                return Err(ApiError::BadRequest(format!("point ({x}, {y}) outside {w}x{h} slice")));
            }
            Ok(InitialPrompt::Point { x, y, z: p.z })
        }
        (PromptType::Bbox, &[x0, y0, x1, y1]) => {
            let bbox = BBox::new(x0, y0, x1, y1);
            bbox.validate(w, h).map_err(|e| ApiError::BadRequest(e.to_string()))?;
            Ok(InitialPrompt::BBox { z: p.z, bbox })
        }
        (PromptType::Point, _) => Err(ApiError::BadRequest("point prompt needs coords [x, y]".into())),
        (PromptType::Bbox, _) => Err(ApiError::BadRequest("bbox prompt needs coords [x0, y0, x1, y1]".into())),
    }
}

async fn segment(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SegmentRequest>,
) -> Result<Json<MaskResponse>, ApiError> {
    let dims = state.study(&id)?.ct.dims();
    let initial = initial_prompt(&req.prompt, dims)?;
    if let Some(session) = &req.session {
        state.session_study(session, &id)?;
    }
    let (out, report) = state.run(&id, initial, Vec::new()).await?;
    let handle = MaskHandle {
        id: state.new_mask_id(),
        study: id.clone(),
        initial,
        edits: Vec::new(),
        mask: out.mask,
        stops: out.stops,
        report,
    };
    if let Some(session) = &req.session {
        state.attach_mask(session, &id, &handle.id)?;
    }
    let body = respond(&handle, false);
    state.insert_mask(handle);
    Ok(Json(body))
}

async fn add_edit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<EditRequest>,
) -> Result<Json<MaskResponse>, ApiError> {
    let handle = state.mask(&id)?;
    // Held across the re-run: edits to one mask apply in arrival order.
    let mut h = handle.lock().await;
    let dims = h.mask.dims();
    let [x, y, z] = req.point;
    if x >= dims[0] || y >= dims[1] || z >= dims[2] {
        return Err(ApiError::BadRequest(format!("edit point {:?} outside volume {dims:?}", req.point)));
    }
    let mut edits = h.edits.clone();
    edits.push(EditPoint { position: req.point, sign: req.sign });
    let (out, report) = state.run(&h.study, h.initial, edits.clone()).await?;
    let no_effect = out.mask == h.mask;
    h.edits = edits;
    h.mask = out.mask;
    h.stops = out.stops;
    h.report = report;
    Ok(Json(respond(&h, no_effect)))
}

#[derive(Debug, Deserialize)]
pub struct SessionRequest {
    pub study: String,
}

#[derive(Debug, Serialize)]
pub struct SessionResponse {
    pub session_id: String,
    pub study: String,
    /// Unix seconds, millisecond resolution.
    pub display_started_at: f64,
}

async fn start_session(
    State(state): State<AppState>,
    Json(req): Json<SessionRequest>,
) -> Result<Json<SessionResponse>, ApiError> {
    let (session_id, started) = state.start_session(&req.study)?;
    Ok(Json(SessionResponse { session_id, study: req.study, display_started_at: unix_seconds(started) }))
}

#[derive(Debug, Default, Deserialize)]
pub struct FinalizeRequest {
    #[serde(default)]
    pub mask_id: Option<String>,
}

async fn finalize(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<FinalizeRequest>,
) -> Result<Json<crate::state::TimingRecord>, ApiError> {
    Ok(Json(state.finalize(&id, req.mask_id).await?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_parsing() {
        let w = parse_window("-100, 300").unwrap();
        assert_eq!(w, WindowSpec::new(-100.0, 300.0).unwrap());
        for bad in ["5,5", "10,0", "1", "a,b", ""] {
            assert!(matches!(parse_window(bad), Err(ApiError::BadRequest(_))), "{bad}");
        }
    }

    #[test]
    fn png_roundtrip() {
        let img = GrayImage { width: 3, height: 2, pixels: vec![0, 10, 20, 30, 40, 255] };
        let bytes = encode_png(&img);
        let mut reader = png::Decoder::new(std::io::Cursor::new(bytes)).read_info().unwrap();
        assert!(!reader.info().interlaced);
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!(&buf[..info.buffer_size()], img.pixels.as_slice());
    }

    #[test]
    fn prompt_shapes() {
        let p = |kind, coords: Vec<usize>| PromptBody { kind, z: 1, coords };
        assert_eq!(
            initial_prompt(&p(PromptType::Point, vec![2, 3]), [8, 8, 4]).unwrap(),
            InitialPrompt::Point { x: 2, y: 3, z: 1 }
        );
        assert!(initial_prompt(&p(PromptType::Point, vec![2, 3, 4]), [8, 8, 4]).is_err());
        assert!(initial_prompt(&p(PromptType::Bbox, vec![1, 1, 7, 8]), [8, 8, 4]).is_err());
        assert!(initial_prompt(&p(PromptType::Bbox, vec![1, 1, 7, 7]), [8, 8, 4]).is_ok());
    }
}
