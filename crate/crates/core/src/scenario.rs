//! Plain-text scenario files.
//!
//! ```text
//! W H N_AGENTS N_OBSTACLES STEP_LIMIT
//! x y gx gy        (one line per agent)
//! x y              (one line per obstacle)
//! ```
//!
//! A file may hold several scenarios back to back. Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::SplitWhitespace;

use thiserror::Error;

use crate::env::{AgentStatus, Cell, EnvError, GridState};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scenario starting at line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: EnvError,
    },
    #[error("no scenarios found")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_scenario(out: &mut String, state: &GridState) {
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        state.width(),
        state.height(),
        state.n_agents(),
        state.obstacles().len(),
        state.step_limit
    );
    for a in &state.agents {
        let _ = writeln!(out, "{} {} {} {}", a.position.x, a.position.y, a.goal.x, a.goal.y);
    }
    for c in state.obstacles() {
        let _ = writeln!(out, "{} {}", c.x, c.y);
    }
}

pub fn format_scenarios(states: &[GridState]) -> String {
    let mut out = String::new();
    for (i, s) in states.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_scenario(&mut out, s);
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_record(&mut self) -> Option<(usize, SplitWhitespace<'a>)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Some((i + 1, t.split_whitespace()));
        }
        None
    }

    fn expect_record(&mut self, what: &str, after: usize) -> Result<(usize, SplitWhitespace<'a>), ScenarioError> {
        self.next_record().ok_or_else(|| ScenarioError::Parse {
            line: after,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn fields<const N: usize>(line: usize, mut it: SplitWhitespace<'_>) -> Result<[i64; N], ScenarioError> {
    let mut out = [0i64; N];
    for slot in out.iter_mut() {
        let tok = it.next().ok_or_else(|| ScenarioError::Parse {
            line,
            msg: format!("expected {N} integers"),
        })?;
        *slot = tok.parse().map_err(|_| ScenarioError::Parse {
            line,
            msg: format!("not an integer: {tok:?}"),
        })?;
    }
    if it.next().is_some() {
        return Err(ScenarioError::Parse { line, msg: format!("expected exactly {N} integers") });
    }
    Ok(out)
}

fn non_negative(line: usize, v: i64) -> Result<usize, ScenarioError> {
    usize::try_from(v).map_err(|_| ScenarioError::Parse { line, msg: format!("negative count {v}") })
}

fn coord(line: usize, v: i64) -> Result<i32, ScenarioError> {
    i32::try_from(v).map_err(|_| ScenarioError::Parse { line, msg: format!("coordinate {v} out of range") })
}

pub fn parse_scenarios(text: &str) -> Result<Vec<GridState>, ScenarioError> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let mut out = Vec::new();
    while let Some((header_line, header)) = lines.next_record() {
        let [w, h, n, m, limit] = fields::<5>(header_line, header)?;
        let (w, h) = (non_negative(header_line, w)?, non_negative(header_line, h)?);
        let (n, m) = (non_negative(header_line, n)?, non_negative(header_line, m)?);
        let limit = non_negative(header_line, limit)?;
        let mut last = header_line;
        let mut agents = Vec::with_capacity(n);
        for _ in 0..n {
            let (line, rec) = lines.expect_record("an agent line `x y gx gy`", last)?;
            let [x, y, gx, gy] = fields::<4>(line, rec)?;
            agents.push(AgentStatus::new(
                Cell::new(coord(line, x)?, coord(line, y)?),
                Cell::new(coord(line, gx)?, coord(line, gy)?),
            ));
            last = line;
        }
        let mut obstacles = Vec::with_capacity(m);
        for _ in 0..m {
            let (line, rec) = lines.expect_record("an obstacle line `x y`", last)?;
            let [x, y] = fields::<2>(line, rec)?;
            obstacles.push(Cell::new(coord(line, x)?, coord(line, y)?));
            last = line;
        }
        let state = GridState::new(w, h, obstacles, agents, limit)
            .map_err(|source| ScenarioError::Invalid { line: header_line, source })?;
        if state.obstacles().len() != m {
            return Err(ScenarioError::Parse { line: header_line, msg: "duplicate obstacle cells".into() });
        }
        out.push(state);
    }
    Ok(out)
}

/// Reads a scenario file; an empty set is an error.
pub fn load_scenarios(path: &Path) -> Result<Vec<GridState>, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let states = parse_scenarios(&text)?;
    if states.is_empty() {
        return Err(ScenarioError::Empty);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_scenario;

    #[test]
    fn round_trips_generated_scenarios() {
        let states: Vec<_> = (0..5).map(|s| generate_scenario(8, 6, 3, 5, 25, s).unwrap()).collect();
        let text = format_scenarios(&states);
        assert_eq!(parse_scenarios(&text).unwrap(), states);
    }

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# eval set\n\n3 3 1 1 10\n0 0 2 2\n\n1 1\n";
        let s = parse_scenarios(text).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].agents[0].goal, Cell::new(2, 2));
        assert_eq!(s[0].obstacles(), &[Cell::new(1, 1)]);
    }

    #[test]
    fn reports_truncation_and_invalid_states() {
        assert!(matches!(parse_scenarios("4 4 2 0 10\n0 0 1 1\n"), Err(ScenarioError::Parse { .. })));
        assert!(matches!(parse_scenarios("4 4 1 0 10\n0 0 1 x\n"), Err(ScenarioError::Parse { line: 2, .. })));
        assert!(matches!(
            parse_scenarios("4 4 1 1 10\n0 0 1 1\n0 0\n"),
            Err(ScenarioError::Invalid { line: 1, .. })
        ));
        assert!(parse_scenarios("# nothing\n").unwrap().is_empty());
    }
}
