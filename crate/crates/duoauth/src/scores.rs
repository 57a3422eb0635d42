//! Score files (`<genuine|impostor>\t<score>` per line) and DET tables.

use std::path::Path;

use duoauth_core::metrics::{DetPoint, ScoreSet};

use crate::error::{Error, Result};

pub fn parse_scores(text: &str) -> Result<ScoreSet> {
    let mut set = ScoreSet::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(kind), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Format(format!("score line {}: expected `<genuine|impostor> <score>`", i + 1)));
        };
        let v: f64 = value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::Format(format!("score line {}: bad score `{value}`", i + 1)))?;
        match kind {
            "genuine" => set.genuine.push(v),
            "impostor" => set.impostor.push(v),
            _ => return Err(Error::Format(format!("score line {}: unknown kind `{kind}`", i + 1))),
        }
    }
    Ok(set)
}

pub fn render_scores(set: &ScoreSet) -> String {
    let g = set.genuine.iter().map(|v| format!("genuine\t{v}\n"));
    let i = set.impostor.iter().map(|v| format!("impostor\t{v}\n"));
    g.chain(i).collect()
}

pub fn load_scores(path: &Path) -> Result<ScoreSet> {
    parse_scores(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn render_det(points: &[DetPoint]) -> String {
    let mut out = String::from("threshold\tfar\tfrr\n");
    for p in points {
        out.push_str(&format!("{}\t{}\t{}\n", p.threshold, p.far, p.frr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = ScoreSet::new(vec![0.8, 0.4], vec![0.6, 0.2]).unwrap();
        assert_eq!(parse_scores(&render_scores(&s)).unwrap(), s);
    }

    #[test]
    fn rejects_junk() {
        assert!(parse_scores("genuine\n").is_err());
        assert!(parse_scores("other 0.5\n").is_err());
        assert!(parse_scores("genuine NaN\n").is_err());
    }
}
