//! Reference `segproto/1` segmenter: answers the prior mask, the filled
//! bbox, or the positive points, unchanged.

use std::io::{BufRead, Write};
use std::process::ExitCode;

use lesionbench_core::segment::external::{echo_reply, handshake_line};

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if writeln!(out, "{}", handshake_line()).and_then(|_| out.flush()).is_err() {
        return ExitCode::from(1);
    }
    for line in std::io::stdin().lock().lines() {
        let Ok(line) = line else {
            return ExitCode::from(1);
        };
        if line.trim().is_empty() {
            continue;
        }
        match echo_reply(&line) {
            Ok(reply) => {
                if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
                    return ExitCode::from(1);
                }
            }
            Err(e) => {
                eprintln!("segproto-echo: {e}");
                return ExitCode::from(1);
            }
        }
    }
    ExitCode::SUCCESS
}
