//! Line protocol for running a live experiment from a terminal or script.
//!
//! ```text
//! > CASE Init
//! > STAGE 1 ALLOCATE 2 2
//! < OBS 1 5 5
//! < OBS 0 3 3
//! > CASE Plugin2Stage
//! > STAGE 2 ALLOCATE 6 6
//! ...
//! > DONE tau_hat=2 t1=8 t0=8
//! ```
//!
//! Both `OBS` lines are required for every stage, even for an arm with no
//! subjects (`OBS 0` with no values). Blank lines and lines starting with
//! `#` are ignored. A bad line gets `ERR <reason>` and changes nothing; a
//! count mismatch also discards the stage's drafts and repeats the prompt.

use std::io::{BufRead, Write};

use neyman_core::designs::{DesignConfig, DesignState, StageAllocation};

#[derive(Debug)]
pub enum AdviseError {
    Io(std::io::Error),
    Domain(neyman_core::Error),
    /// Input ended before the last stage was submitted.
    Eof { stage: usize },
}

impl From<std::io::Error> for AdviseError {
    fn from(e: std::io::Error) -> Self {
        AdviseError::Io(e)
    }
}

fn prompt<W: Write>(out: &mut W, stage: &StageAllocation) -> std::io::Result<()> {
    writeln!(out, "CASE {}", stage.case_label)?;
    writeln!(out, "STAGE {} ALLOCATE {} {}", stage.stage, stage.t1, stage.t0)?;
    out.flush()
}

fn parse_obs(line: &str) -> Result<(u8, Vec<f64>), String> {
    let mut words = line.split_whitespace();
    match words.next() {
        Some("OBS") => {}
        Some(other) => return Err(format!("unknown command {other:?}")),
        None => return Err("empty line".into()),
    }
    let arm = match words.next() {
        Some("1") => 1,
        Some("0") => 0,
        Some(other) => return Err(format!("arm must be 1 or 0, got {other:?}")),
        None => return Err("missing arm".into()),
    };
    let values = words
        .map(|w| match w.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("not a finite number: {w:?}")),
        })
        .collect::<Result<Vec<f64>, String>>()?;
    Ok((arm, values))
}

/// Runs a session to completion and returns the final `(t1, t0, τ̂)`.
pub fn run<R: BufRead, W: Write>(config: DesignConfig, input: R, out: &mut W) -> Result<(u64, u64, f64), AdviseError> {
    let (mut state, mut stage) = DesignState::start(config).map_err(AdviseError::Domain)?;
    prompt(out, &stage)?;
    let mut treated: Option<Vec<f64>> = None;
    let mut control: Option<Vec<f64>> = None;
    let mut lines = input.lines();
    loop {
        let Some(line) = lines.next() else {
            return Err(AdviseError::Eof { stage: stage.stage });
        };
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_obs(line) {
            Ok((1, v)) => treated = Some(v),
            Ok((_, v)) => control = Some(v),
            Err(reason) => {
                writeln!(out, "ERR {reason}")?;
                continue;
            }
        }
        let (Some(t), Some(c)) = (&treated, &control) else { continue };
        match state.submit(t, c) {
            Ok(Some(next)) => {
                stage = next;
                prompt(out, &stage)?;
            }
            Ok(None) => {
                let (totals, tau_hat) = state.finalize().map_err(AdviseError::Domain)?;
                writeln!(out, "DONE tau_hat={tau_hat} t1={} t0={}", totals.t1, totals.t0)?;
                out.flush()?;
                return Ok((totals.t1, totals.t0, tau_hat));
            }
            Err(e) => {
                writeln!(out, "ERR {e}")?;
                prompt(out, &stage)?;
            }
        }
        treated = None;
        control = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transcript(config: DesignConfig, input: &str) -> (String, Result<(u64, u64, f64), AdviseError>) {
        let mut out = Vec::new();
        let r = run(config, input.as_bytes(), &mut out);
        (String::from_utf8(out).unwrap(), r)
    }

    #[test]
    fn parses_observation_lines() {
        assert_eq!(parse_obs("OBS 1 1.5 2").unwrap(), (1, vec![1.5, 2.0]));
        assert_eq!(parse_obs("OBS 0").unwrap(), (0, vec![]));
        assert!(parse_obs("OBS 2 1").is_err());
        assert!(parse_obs("OBS 1 x").is_err());
        assert!(parse_obs("OBS 1 NaN").is_err());
        assert!(parse_obs("GO").is_err());
    }

    #[test]
    fn bad_lines_leave_the_stage_open() {
        let config = DesignConfig::half_half(4).unwrap();
        let (out, r) = transcript(config, "hello\nOBS 1 1 2\nOBS 0 1\nOBS 1 1 2\nOBS 0 1 1\n");
        assert_eq!(r.unwrap(), (2, 2, 0.5));
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[2], "ERR unknown command \"hello\"");
        assert!(lines[3].starts_with("ERR observation count mismatch"));
        assert_eq!(lines[5], "STAGE 1 ALLOCATE 2 2");
        assert_eq!(*lines.last().unwrap(), "DONE tau_hat=0.5 t1=2 t0=2");
    }

    #[test]
    fn early_eof_is_an_error() {
        let (_, r) = transcript(DesignConfig::half_half(4).unwrap(), "OBS 1 1 2\n");
        assert!(matches!(r, Err(AdviseError::Eof { stage: 1 })));
    }
}
