//! Vote-to-score curation: convert raw monthly contest vote counts into
//! aesthetic scores in [0, 10], plus the alternative scoring functions kept
//! for the comparison harness, deterministic splits, and CSV ingest/emit.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::chacha;
use rand::seq::SliceRandom;

#[derive(Debug, Error)]
pub enum CurateError {
    #[error("no records supplied")]
    EmptyInput,
    #[error("record '{0}' has zero votes; zero-vote entries are excluded upstream")]
    ZeroVotes(String),
    #[error("month mean must be positive (got {0})")]
    NonPositiveMean(f64),
    #[error("month key '{0}' is not YYYY-MM")]
    BadMonth(String),
    #[error("score function '{0}' unknown (expected sigmoid|a|b|c)")]
    UnknownScoreFn(String),
    #[error("month '{month}': max votes equal mean votes; choice {choice} divides by zero")]
    DegenerateMonth { month: String, choice: char },
    #[error("split counts {train}+{test} do not match record count {total}")]
    SplitCountMismatch {
        train: usize,
        test: usize,
        total: usize,
    },
    #[error("{path}: line {line}: {message}")]
    Csv {
        path: String,
        line: u64,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One raw contest entry: votes and entry month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteRecord {
    pub image_id: String,
    pub votes: u64,
    pub month: String,
    /// Image location from the manifest; empty when scores-only data is used.
    pub path: Option<PathBuf>,
}

impl VoteRecord {
    pub fn new(
        image_id: impl Into<String>,
        votes: u64,
        month: impl Into<String>,
    ) -> Result<Self, CurateError> {
        let image_id = image_id.into();
        let month = month.into();
        if votes == 0 {
            return Err(CurateError::ZeroVotes(image_id));
        }
        validate_month(&month)?;
        Ok(Self {
            image_id,
            votes,
            month,
            path: None,
        })
    }

    pub fn with_path(mut self, path: PathBuf) -> Self {
        self.path = Some(path);
        self
    }
}

fn validate_month(month: &str) -> Result<(), CurateError> {
    let bytes = month.as_bytes();
    let ok = bytes.len() == 7
        && bytes[4] == b'-'
        && bytes[..4].iter().all(u8::is_ascii_digit)
        && bytes[5..].iter().all(u8::is_ascii_digit)
        && &month[5..] >= "01"
        && &month[5..] <= "12";
    if ok {
        Ok(())
    } else {
        Err(CurateError::BadMonth(month.to_string()))
    }
}

/// Per-month vote statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthStats {
    pub month: String,
    pub mean_votes: f64,
    pub max_votes: u64,
    pub count: usize,
}

/// Arithmetic mean and maximum of votes, partitioned by month.
pub fn monthly_stats(records: &[VoteRecord]) -> Result<BTreeMap<String, MonthStats>, CurateError> {
    if records.is_empty() {
        return Err(CurateError::EmptyInput);
    }
    let mut sums: BTreeMap<String, (u64, u64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.month.clone()).or_insert((0, 0, 0));
        e.0 += r.votes;
        e.1 = e.1.max(r.votes);
        e.2 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(month, (sum, max, count))| {
            let stats = MonthStats {
                month: month.clone(),
                mean_votes: sum as f64 / count as f64,
                max_votes: max,
                count,
            };
            (month, stats)
        })
        .collect())
}

/// Sigmoid vote-to-score mapping:
/// `x = (mean - v) / mean`, `score = 10 / (1 + e^x)`.
///
/// `v = mean` gives exactly 5; the score is strictly increasing in `v`.
pub fn score_sigmoid(votes: u64, mean: f64) -> Result<f64, CurateError> {
    if votes == 0 {
        return Err(CurateError::ZeroVotes(String::new()));
    }
    if mean <= 0.0 {
        return Err(CurateError::NonPositiveMean(mean));
    }
    let x = (mean - votes as f64) / mean;
    Ok(10.0 / (1.0 + x.exp()))
}

/// Comparison-harness choice A: `5 v / mean`.
pub fn score_choice_a(votes: u64, mean: f64) -> Result<f64, CurateError> {
    if mean <= 0.0 {
        return Err(CurateError::NonPositiveMean(mean));
    }
    Ok(5.0 * votes as f64 / mean)
}

/// Comparison-harness choice B:
/// `5 - 5 (mean - v)/mean` below the mean, `5 + 5 v/(max - mean)` above it.
/// The second branch can exceed 10; it is kept as designed.
pub fn score_choice_b(votes: u64, mean: f64, max: u64) -> Result<f64, CurateError> {
    if mean <= 0.0 {
        return Err(CurateError::NonPositiveMean(mean));
    }
    let v = votes as f64;
    if v <= mean {
        Ok(5.0 - 5.0 * (mean - v) / mean)
    } else if max as f64 <= mean {
        Err(CurateError::DegenerateMonth {
            month: String::new(),
            choice: 'b',
        })
    } else {
        Ok(5.0 + 5.0 * v / (max as f64 - mean))
    }
}

/// Comparison-harness choice C: like B, but the first branch multiplies the
/// deficit by `v` rather than 5 — implemented exactly as designed.
pub fn score_choice_c(votes: u64, mean: f64, max: u64) -> Result<f64, CurateError> {
    if mean <= 0.0 {
        return Err(CurateError::NonPositiveMean(mean));
    }
    let v = votes as f64;
    if v <= mean {
        Ok(5.0 - v * (mean - v) / mean)
    } else if max as f64 <= mean {
        Err(CurateError::DegenerateMonth {
            month: String::new(),
            choice: 'c',
        })
    } else {
        Ok(5.0 + 5.0 * v / (max as f64 - mean))
    }
}

/// Which scoring function a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreFn {
    Sigmoid,
    A,
    B,
    C,
}

impl std::str::FromStr for ScoreFn {
    type Err = CurateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigmoid" => Ok(ScoreFn::Sigmoid),
            "a" => Ok(ScoreFn::A),
            "b" => Ok(ScoreFn::B),
            "c" => Ok(ScoreFn::C),
            other => Err(CurateError::UnknownScoreFn(other.to_string())),
        }
    }
}

/// A record with its derived score and the sigmoid intermediate `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredImage {
    pub image_id: String,
    pub score: f64,
    pub votes: u64,
    pub month: String,
    pub x: f64,
    pub path: Option<PathBuf>,
}

/// Score every record with the sigmoid mapping; input order is preserved.
pub fn score_all(records: &[VoteRecord]) -> Result<Vec<ScoredImage>, CurateError> {
    score_all_with(records, ScoreFn::Sigmoid)
}

/// Score every record with the chosen function. For choices B and C every
/// month must have `max > mean`, otherwise the month is rejected up front.
pub fn score_all_with(
    records: &[VoteRecord],
    score_fn: ScoreFn,
) -> Result<Vec<ScoredImage>, CurateError> {
    let stats = monthly_stats(records)?;
    if matches!(score_fn, ScoreFn::B | ScoreFn::C) {
        for s in stats.values() {
            if s.max_votes as f64 <= s.mean_votes {
                return Err(CurateError::DegenerateMonth {
                    month: s.month.clone(),
                    choice: if score_fn == ScoreFn::B { 'b' } else { 'c' },
                });
            }
        }
    }
    records
        .iter()
        .map(|r| {
            let st = &stats[&r.month];
            let score = match score_fn {
                ScoreFn::Sigmoid => score_sigmoid(r.votes, st.mean_votes)?,
                ScoreFn::A => score_choice_a(r.votes, st.mean_votes)?,
                ScoreFn::B => score_choice_b(r.votes, st.mean_votes, st.max_votes)?,
                ScoreFn::C => score_choice_c(r.votes, st.mean_votes, st.max_votes)?,
            };
            Ok(ScoredImage {
                image_id: r.image_id.clone(),
                score,
                votes: r.votes,
                month: r.month.clone(),
                x: (st.mean_votes - r.votes as f64) / st.mean_votes,
                path: r.path.clone(),
            })
        })
        .collect()
}

/// Binary attractiveness label with the tie rule: exactly 5 is unattractive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attractiveness {
    Attractive,
    Unattractive,
}

/// Attractive iff the score is strictly above the threshold of 5.
pub fn binarize(score: f64) -> Attractiveness {
    binarize_at(score, 5.0)
}

pub fn binarize_at(score: f64, threshold: f64) -> Attractiveness {
    if score > threshold {
        Attractiveness::Attractive
    } else {
        Attractiveness::Unattractive
    }
}

/// Seed-deterministic disjoint, exhaustive partition into train and test.
pub fn split<T: Clone>(
    records: &[T],
    seed: u64,
    train_count: usize,
    test_count: usize,
) -> Result<(Vec<T>, Vec<T>), CurateError> {
    if train_count + test_count != records.len() {
        return Err(CurateError::SplitCountMismatch {
            train: train_count,
            test: test_count,
            total: records.len(),
        });
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut chacha(seed));
    let train = idx[..train_count].iter().map(|&i| records[i].clone()).collect();
    let test = idx[train_count..].iter().map(|&i| records[i].clone()).collect();
    Ok((train, test))
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    image_id: String,
    votes: u64,
    month: String,
    path: String,
}

/// Result of reading a manifest: valid records plus the number of zero-vote
/// rows that were excluded.
pub struct ManifestData {
    pub records: Vec<VoteRecord>,
    pub excluded_zero_votes: usize,
}

/// Read the `image_id,votes,month,path` manifest CSV. Zero-vote rows are
/// excluded (counted, not errors); malformed rows report their line number.
pub fn read_manifest(path: &Path) -> Result<ManifestData, CurateError> {
    let file = std::fs::File::open(path).map_err(CurateError::Io)?;
    read_manifest_from(file, &path.display().to_string())
}

pub fn read_manifest_from(reader: impl Read, name: &str) -> Result<ManifestData, CurateError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut records = Vec::new();
    let mut excluded = 0usize;
    for result in rdr.deserialize::<ManifestRow>() {
        let row = result.map_err(|e| CurateError::Csv {
            path: name.to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if row.votes == 0 {
            excluded += 1;
            continue;
        }
        validate_month(&row.month).map_err(|e| CurateError::Csv {
            path: name.to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        records.push(
            VoteRecord::new(row.image_id, row.votes, row.month)?
                .with_path(PathBuf::from(row.path)),
        );
    }
    Ok(ManifestData {
        records,
        excluded_zero_votes: excluded,
    })
}

/// Write the score table CSV `image_id,score,votes,month` with six decimal
/// places on the score.
pub fn write_scores(scored: &[ScoredImage], mut w: impl Write) -> Result<(), CurateError> {
    writeln!(w, "image_id,score,votes,month")?;
    for s in scored {
        writeln!(w, "{},{:.6},{},{}", s.image_id, s.score, s.votes, s.month)?;
    }
    Ok(())
}

/// Read a score table CSV back into (id, score) pairs.
pub fn read_scores(path: &Path) -> Result<Vec<(String, f64)>, CurateError> {
    #[derive(Deserialize)]
    struct Row {
        image_id: String,
        score: f64,
        #[allow(dead_code)]
        #[serde(default)]
        votes: Option<u64>,
        #[allow(dead_code)]
        #[serde(default)]
        month: Option<String>,
    }
    let file = std::fs::File::open(path).map_err(CurateError::Io)?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for result in rdr.deserialize::<Row>() {
        let row = result.map_err(|e| CurateError::Csv {
            path: path.display().to_string(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        out.push((row.image_id, row.score));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, votes: u64, month: &str) -> VoteRecord {
        VoteRecord::new(id, votes, month).unwrap()
    }

    #[test]
    fn monthly_stats_mean_and_max() {
        let rs = vec![rec("a", 10, "2020-01"), rec("b", 20, "2020-01"), rec("c", 30, "2020-01")];
        let stats = monthly_stats(&rs).unwrap();
        assert_eq!(stats["2020-01"].mean_votes, 20.0);
        assert_eq!(stats["2020-01"].max_votes, 30);
        assert_eq!(stats["2020-01"].count, 3);
    }

    #[test]
    fn single_record_month() {
        let stats = monthly_stats(&[rec("a", 7, "2021-06")]).unwrap();
        assert_eq!(stats["2021-06"].mean_votes, 7.0);
        assert_eq!(stats["2021-06"].max_votes, 7);
    }

    #[test]
    fn months_partition_independently() {
        let a = vec![rec("a", 5, "2020-01"), rec("b", 15, "2020-01")];
        let mut both = a.clone();
        both.push(rec("c", 1000, "2020-02"));
        let sa = monthly_stats(&a).unwrap();
        let sb = monthly_stats(&both).unwrap();
        assert_eq!(sa["2020-01"], sb["2020-01"]);
    }

    #[test]
    fn sigmoid_midpoint_is_exactly_five() {
        assert_eq!(score_sigmoid(20, 20.0).unwrap(), 5.0);
    }

    #[test]
    fn sigmoid_examples() {
        // v = 2 * mean -> x = -1.
        let s = score_sigmoid(40, 20.0).unwrap();
        assert!((s - 10.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        assert!((s - 7.310585786300049).abs() < 1e-10);
        // v = 1, mean = 100 -> x = 0.99.
        let s = score_sigmoid(1, 100.0).unwrap();
        assert!((s - 10.0 / (1.0 + 0.99f64.exp())).abs() < 1e-12);
        assert!((s - 2.7091).abs() < 5e-4);
    }

    #[test]
    fn choice_functions_at_the_mean() {
        assert_eq!(score_choice_a(10, 10.0).unwrap(), 5.0);
        assert_eq!(score_choice_b(10, 10.0, 30).unwrap(), 5.0);
        // Choice B above the mean can exceed 10 - preserved as designed.
        let s = score_choice_b(30, 10.0, 30).unwrap();
        assert!((s - (5.0 + 5.0 * 30.0 / 20.0)).abs() < 1e-12);
        assert!(s > 10.0);
        // Choice C's literal first branch: 5 - v (mean - v)/mean.
        let s = score_choice_c(2, 10.0, 30).unwrap();
        assert!((s - (5.0 - 2.0 * 8.0 / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn choice_b_degenerate_second_branch_errors() {
        assert!(matches!(
            score_choice_b(11, 10.0, 10),
            Err(CurateError::DegenerateMonth { choice: 'b', .. })
        ));
    }

    #[test]
    fn score_all_preserves_order_and_count() {
        let rs: Vec<VoteRecord> =
            (1..=100).map(|i| rec(&format!("img{i}"), i, "2020-03")).collect();
        let scored = score_all(&rs).unwrap();
        assert_eq!(scored.len(), rs.len());
        for (s, r) in scored.iter().zip(&rs) {
            assert_eq!(s.image_id, r.image_id);
            assert!(s.score > 0.0 && s.score < 10.0);
        }
    }

    #[test]
    fn equal_votes_all_score_five() {
        let rs: Vec<VoteRecord> = (0..5).map(|i| rec(&format!("i{i}"), 12, "2020-01")).collect();
        for s in score_all(&rs).unwrap() {
            assert_eq!(s.score, 5.0);
        }
    }

    #[test]
    fn binarize_tie_rule() {
        assert_eq!(binarize(5.0), Attractiveness::Unattractive);
        assert_eq!(binarize(7.31), Attractiveness::Attractive);
        assert_eq!(binarize(2.71), Attractiveness::Unattractive);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let rs: Vec<u32> = (0..100).collect();
        let (tr1, te1) = split(&rs, 9, 80, 20).unwrap();
        let (tr2, te2) = split(&rs, 9, 80, 20).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let mut all: Vec<u32> = tr1.iter().chain(te1.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, rs);
        assert!(split(&rs, 9, 80, 19).is_err());
    }

    #[test]
    fn manifest_reading_excludes_zero_votes_and_reports_lines() {
        let csv = "image_id,votes,month,path\na,3,2020-01,a.png\nb,0,2020-01,b.png\n";
        let data = read_manifest_from(csv.as_bytes(), "mem").unwrap();
        assert_eq!(data.records.len(), 1);
        assert_eq!(data.excluded_zero_votes, 1);

        let bad = "image_id,votes,month,path\na,xyz,2020-01,a.png\n";
        let err = read_manifest_from(bad.as_bytes(), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "error should carry line numbers: {msg}");
    }

    #[test]
    fn month_validation() {
        assert!(validate_month("2020-07").is_ok());
        assert!(validate_month("2020-13").is_err());
        assert!(validate_month("20-07").is_err());
        assert!(validate_month("2020/07").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sigmoid_strictly_increasing_in_votes(v in 1u64..5000, mean in 0.5f64..2000.0) {
            let a = score_sigmoid(v, mean).unwrap();
            let b = score_sigmoid(v + 1, mean).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn rescaling_a_month_preserves_scores(
            votes in proptest::collection::vec(1u64..500, 2..20),
            scale in 2u64..20,
        ) {
            let base: Vec<VoteRecord> = votes.iter().enumerate()
                .map(|(i, &v)| rec(&format!("r{i}"), v, "2020-01")).collect();
            let scaled: Vec<VoteRecord> = votes.iter().enumerate()
                .map(|(i, &v)| rec(&format!("r{i}"), v * scale, "2020-01")).collect();
            let s1 = score_all(&base).unwrap();
            let s2 = score_all(&scaled).unwrap();
            for (a, b) in s1.iter().zip(&s2) {
                prop_assert!((a.score - b.score).abs() < 1e-12);
            }
        }
    }
}
