//! Core of lesionbench: promptable 2D lesion segmentation on CT slices,
//! autoregressive propagation into 3D masks, and the measurement and
//! evaluation machinery around it.
//!
//! The crate is organized bottom-up:
//!
//! 1. **volume** / **io** – CT volumes, binary masks, windowing, NIfTI-1 and raw+JSON files.
//! 2. **phantom** – synthetic CT volumes with analytically known lesions.
//! 3. **segment** – the built-in classical 2D segmenter and the `segproto/1` subprocess protocol.
//! 4. **propagate** / **pipeline** – slice-to-slice propagation and prompt-to-3D-mask runs.
//! 5. **prompt_sim** – prompts derived from ground truth and the edit-click simulation.
//! 6. **metrics** / **stats** – DICE, morphology, RECIST axes, quantiles and Welch's test.
//! 7. **harness** – batch evaluation, reader simulation and reports.

pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod prompt_sim;
pub mod propagate;
pub mod rng;
pub mod segment;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{CtVolume, Dims, GrayImage, HuSlice, Mask2D, MaskVolume, Spacing, WindowSpec};
