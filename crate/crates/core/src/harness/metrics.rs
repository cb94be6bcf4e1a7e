use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::world::{GOAL_REWARD, MILESTONE_REWARD, STEP_REWARD};

pub const CSV_HEADER: &str = "session,episode,score,steps,advice_offered,advice_used,reached_goal";

/// Outcome of one training episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub session: usize,
    /// Zero-based.
    pub episode: usize,
    pub score: f64,
    pub steps: usize,
    pub advice_offered: u64,
    pub advice_used: u64,
    pub reached_goal: bool,
}

impl EpisodeRecord {
    /// Number of corridor milestones implied by the score, if the score is
    /// consistent with the reward decomposition.
    pub fn implied_milestones(&self) -> Option<u32> {
        let goal = if self.reached_goal { GOAL_REWARD } else { 0.0 };
        let rest = self.score - goal - STEP_REWARD * self.steps as f64;
        let k = rest / MILESTONE_REWARD;
        let r = k.round();
        ((k - r).abs() < 1e-9 && (0.0..=2.0).contains(&r)).then_some(r as u32)
    }
}

pub fn records_to_csv(records: &[EpisodeRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.session, r.episode, r.score, r.steps, r.advice_offered, r.advice_used, r.reached_goal
        );
    }
    s
}

pub fn write_records(path: &Path, records: &[EpisodeRecord]) -> Result<(), HarnessError> {
    super::write_file(path, records_to_csv(records).as_bytes())
}

pub fn parse_records(text: &str) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(HarnessError::Parse { line: 1, reason: format!("expected header `{CSV_HEADER}`") }),
    }
    let mut out = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| HarnessError::Parse { line: no + 1, reason: format!("bad {what} in `{line}`") };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        out.push(EpisodeRecord {
            session: f[0].parse().map_err(|_| bad("session"))?,
            episode: f[1].parse().map_err(|_| bad("episode"))?,
            score: f[2].parse().map_err(|_| bad("score"))?,
            steps: f[3].parse().map_err(|_| bad("steps"))?,
            advice_offered: f[4].parse().map_err(|_| bad("advice_offered"))?,
            advice_used: f[5].parse().map_err(|_| bad("advice_used"))?,
            reached_goal: f[6].parse().map_err(|_| bad("reached_goal"))?,
        });
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    parse_records(&super::read_file(path)?)
}

/// Trailing mean over the last `min(window, i + 1)` values.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, HarnessError> {
    if series.is_empty() {
        return Err(HarnessError::Config("moving average of an empty series".into()));
    }
    if window == 0 {
        return Err(HarnessError::Config("moving average window must be positive".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            let span = &series[(i + 1).saturating_sub(window)..=i];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect())
}

/// One-based index of the episode that completes the first run of `run`
/// consecutive goal episodes.
pub fn episodes_to_stable_goal(goals: &[bool], run: usize) -> Option<usize> {
    let mut streak = 0;
    for (i, &g) in goals.iter().enumerate() {
        streak = if g { streak + 1 } else { 0 };
        if streak >= run {
            return Some(i + 1);
        }
    }
    None
}

/// Median; averages the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Score a moving average must exceed to count as recovered: 90% of the
/// reference plateau, measured so that it lies below a negative plateau too.
pub fn reconvergence_threshold(reference: f64) -> f64 {
    reference - 0.1 * reference.abs()
}

/// One-based index of the first episode whose full trailing window of
/// `window` scores averages above the threshold for `reference`.
pub fn reconvergence_episode(scores: &[f64], reference: f64, window: usize) -> Option<usize> {
    if window == 0 || scores.len() < window {
        return None;
    }
    let threshold = reconvergence_threshold(reference);
    let ma = moving_average(scores, window).ok()?;
    (window - 1..scores.len()).find(|&i| ma[i] > threshold).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_cases() {
        assert_eq!(moving_average(&[3.0; 5], 10).unwrap(), vec![3.0; 5]);
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(*moving_average(&s, 10).unwrap().last().unwrap(), 5.5);
        assert_eq!(moving_average(&s, 1).unwrap(), s);
        assert_eq!(moving_average(&[1.0, 3.0, 5.0], 2).unwrap(), vec![1.0, 2.0, 4.0]);
        assert!(moving_average(&[], 3).is_err());
    }

    #[test]
    fn stable_goal_run() {
        assert_eq!(episodes_to_stable_goal(&[true, true, false, true, true, true], 3), Some(6));
        assert_eq!(episodes_to_stable_goal(&[true, true], 3), None);
    }

    #[test]
    fn csv_round_trip() {
        let r = EpisodeRecord {
            session: 1,
            episode: 4,
            score: 17990.5,
            steps: 19,
            advice_offered: 2,
            advice_used: 1,
            reached_goal: true,
        };
        let text = records_to_csv(&[r]);
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(parse_records(&text).unwrap(), vec![r]);
        assert_eq!(r.implied_milestones(), Some(2));
        assert_eq!(EpisodeRecord { score: 1.0, ..r }.implied_milestones(), None);
    }

    #[test]
    fn reconvergence_rule() {
        assert_eq!(reconvergence_threshold(1000.0), 900.0);
        assert_eq!(reconvergence_threshold(-1000.0), -1100.0);
        let scores = vec![100.0; 12];
        assert_eq!(reconvergence_episode(&scores, 100.0, 10), Some(10));
        assert_eq!(reconvergence_episode(&scores[..9], 100.0, 10), None);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), Some(2.5));
    }
}
