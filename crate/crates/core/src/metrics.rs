//! Offline and ranking metrics: PNR, AUC, P/R/F1, DCG@p and ΔGSB.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Data(format!("label {bad} is not binary")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    Ok(())
}

/// Positive-negative ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pnr {
    Finite(f64),
    /// Concordant pairs exist but none are discordant.
    PosInf,
    /// Every label-ordered pair has tied scores.
    AllTied,
}

impl Pnr {
    /// Numeric view: `+inf` for `PosInf`, NaN for `AllTied`.
    pub fn value(self) -> f64 {
        match self {
            Pnr::Finite(v) => v,
            Pnr::PosInf => f64::INFINITY,
            Pnr::AllTied => f64::NAN,
        }
    }
}

impl fmt::Display for Pnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pnr::Finite(v) => write!(f, "{v:.4}"),
            Pnr::PosInf => f.write_str("inf"),
            Pnr::AllTied => f.write_str("all_tied"),
        }
    }
}

impl Serialize for Pnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Pnr::Finite(v) => s.serialize_f64(*v),
            Pnr::PosInf => s.serialize_str("inf"),
            Pnr::AllTied => s.serialize_str("all_tied"),
        }
    }
}

impl<'de> Deserialize<'de> for Pnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Pnr::Finite(v)),
            Raw::Tag(t) if t == "inf" => Ok(Pnr::PosInf),
            Raw::Tag(t) if t == "all_tied" => Ok(Pnr::AllTied),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("bad PNR value `{t}`"))),
        }
    }
}

/// Counts `(concordant, discordant)` over all positive/negative pairs.
/// Pairs with tied scores count as neither.
pub fn pair_counts(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    check_lengths(scores, labels)?;
    let mut neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 0)
        .map(|(s, _)| *s)
        .collect();
    neg.sort_by(f64::total_cmp);
    let (mut conc, mut disc) = (0u64, 0u64);
    for (s, _) in scores.iter().zip(labels).filter(|(_, &l)| l == 1) {
        let below = neg.partition_point(|n| n < s);
        let not_above = neg.partition_point(|n| n <= s);
        conc += below as u64;
        disc += (neg.len() - not_above) as u64;
    }
    Ok((conc, disc))
}

/// Concordant over discordant label-ordered pairs.
pub fn pnr(scores: &[f64], labels: &[u8]) -> Result<Pnr> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::NoComparablePairs);
    }
    let (c, d) = pair_counts(scores, labels)?;
    Ok(match (c, d) {
        (0, 0) => Pnr::AllTied,
        (_, 0) => Pnr::PosInf,
        (c, d) => Pnr::Finite(c as f64 / d as f64),
    })
}

/// Mann-Whitney AUC; tied pairs count one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let (c, d) = pair_counts(scores, labels)?;
    let total = pos as u64 * neg as u64;
    let ties = total - c - d;
    Ok((c as f64 + 0.5 * ties as f64) / total as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub undefined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub threshold: f64,
    pub label0: LabelPrf,
    pub label1: LabelPrf,
}

fn label_prf(tp: u64, fp: u64, fn_: u64) -> LabelPrf {
    let mut undefined = false;
    let mut ratio = |a: u64, b: u64| {
        if b == 0 {
            undefined = true;
            0.0
        } else {
            a as f64 / b as f64
        }
    };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined = true;
        0.0
    };
    LabelPrf {
        precision,
        recall,
        f1,
        undefined,
    }
}

/// Per-label precision/recall/F1. An item is predicted 1 when `score >= threshold`.
pub fn prf1(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Prf1> {
    check_lengths(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (s, &l) in scores.iter().zip(labels) {
        match (*s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Prf1 {
        threshold,
        label1: label_prf(tp, fp, fn_),
        label0: label_prf(tn, fn_, fp),
    })
}

/// One query's result list with graded relevance `0..=4` in ranked order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judgments {
    pub query: String,
    pub grades: Vec<u8>,
}

/// `Σ_{i=1..p} (2^{rel_i} − 1) / log2(i + 1)` over the first `p` grades.
pub fn dcg(grades: &[u8], p: usize) -> f64 {
    grades
        .iter()
        .take(p)
        .enumerate()
        .map(|(i, &g)| ((1u64 << g) - 1) as f64 / ((i + 2) as f64).log2())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcgReport {
    pub p: usize,
    pub per_query: Vec<(String, f64)>,
    pub mean: f64,
    /// Share of the top-`p` positions, over all queries, holding grade 0 or 1.
    pub low_grade_ratio: f64,
}

pub fn dcg_at(lists: &[Judgments], p: usize) -> Result<DcgReport> {
    let mut per_query = Vec::with_capacity(lists.len());
    let mut low = 0usize;
    for j in lists {
        if j.grades.len() < p {
            return Err(Error::ShortList {
                query: j.query.clone(),
                p,
            });
        }
        if let Some(g) = j.grades.iter().find(|&&g| g > 4) {
            return Err(Error::Data(format!(
                "grade {g} out of range for query {:?}",
                j.query
            )));
        }
        low += j.grades[..p].iter().filter(|&&g| g <= 1).count();
        per_query.push((j.query.clone(), dcg(&j.grades, p)));
    }
    let n = lists.len();
    let mean = if n == 0 {
        0.0
    } else {
        per_query.iter().map(|(_, v)| v).sum::<f64>() / n as f64
    };
    let low_grade_ratio = if n * p == 0 {
        0.0
    } else {
        low as f64 / (n * p) as f64
    };
    Ok(DcgReport {
        p,
        per_query,
        mean,
        low_grade_ratio,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GsbCounts {
    pub good: u64,
    pub same: u64,
    pub bad: u64,
}

/// `(#Good − #Bad) / (#Good + #Same + #Bad)`
pub fn gsb(c: GsbCounts) -> Result<f64> {
    let total = c.good + c.same + c.bad;
    if total == 0 {
        return Err(Error::EmptyCounts);
    }
    Ok((c.good as f64 - c.bad as f64) / total as f64)
}

/// Everything `evaluate` reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_items: usize,
    pub pnr: Pnr,
    pub auc: f64,
    pub prf1: Prf1,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcg: Option<DcgReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gsb: Option<f64>,
}

impl EvalReport {
    pub fn compute(scores: &[f64], labels: &[u8]) -> Result<Self> {
        Ok(EvalReport {
            num_items: scores.len(),
            pnr: pnr(scores, labels)?,
            auc: auc(scores, labels)?,
            prf1: prf1(scores, labels, 0.5)?,
            dcg: None,
            gsb: None,
        })
    }

    /// Flat `(name, value)` view used for delta tables.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("PNR".to_string(), self.pnr.value()),
            ("AUC".to_string(), self.auc),
        ];
        for (label, m) in [("label0", &self.prf1.label0), ("label1", &self.prf1.label1)] {
            out.push((format!("P_{label}"), m.precision));
            out.push((format!("R_{label}"), m.recall));
            out.push((format!("F1_{label}"), m.f1));
        }
        if let Some(d) = &self.dcg {
            out.push((format!("DCG@{}", d.p), d.mean));
            out.push(("DCG_0/1_ratio".to_string(), d.low_grade_ratio));
        }
        if let Some(g) = self.gsb {
            out.push(("GSB".to_string(), g));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let labels = [1, 1, 0, 0];
        let scores = [0.9, 0.4, 0.6, 0.1];
        assert_eq!(pair_counts(&scores, &labels).unwrap(), (3, 1));
        assert_eq!(pnr(&scores, &labels).unwrap(), Pnr::Finite(3.0));
        assert_eq!(auc(&scores, &labels).unwrap(), 0.75);
        assert_eq!(pnr(&[0.9, 0.8, 0.2], &[1, 1, 0]).unwrap(), Pnr::PosInf);
        assert_eq!(pnr(&[0.5; 4], &labels).unwrap(), Pnr::AllTied);
        assert!(matches!(
            pnr(&[0.1, 0.2], &[1, 1]),
            Err(Error::NoComparablePairs)
        ));
        assert!(matches!(auc(&[0.1, 0.2], &[0, 0]), Err(Error::SingleClass)));
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5; 4], &labels).unwrap(), 0.5);
    }

    #[test]
    fn prf_cases() {
        let perfect = prf1(&[0.9, 0.7, 0.2, 0.1], &[1, 1, 0, 0], 0.5).unwrap();
        for m in [perfect.label0, perfect.label1] {
            assert_eq!(
                (m.precision, m.recall, m.f1, m.undefined),
                (1.0, 1.0, 1.0, false)
            );
        }
        let all_pos = prf1(&[0.9, 0.7, 0.6, 0.5], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!(all_pos.label1.recall, 1.0);
        assert_eq!(all_pos.label1.precision, 0.5);
        assert!(all_pos.label0.undefined);
        assert_eq!(all_pos.label0.precision, 0.0);
    }

    #[test]
    fn dcg_cases() {
        assert_eq!(dcg(&[0, 0, 0, 0], 4), 0.0);
        assert_eq!(dcg(&[4], 1), 15.0);
        let v = dcg(&[3, 2, 0, 1], 4);
        assert!((v - 9.3234).abs() < 1e-3, "{v}");
        let r = dcg_at(
            &[
                Judgments {
                    query: "a".into(),
                    grades: vec![3, 2, 0, 1],
                },
                Judgments {
                    query: "b".into(),
                    grades: vec![4, 4, 4, 4, 0],
                },
            ],
            4,
        )
        .unwrap();
        assert_eq!(r.low_grade_ratio, 2.0 / 8.0);
        let short = dcg_at(
            &[Judgments {
                query: "q".into(),
                grades: vec![1, 2],
            }],
            4,
        );
        assert!(matches!(short, Err(Error::ShortList { p: 4, .. })));
    }

    #[test]
    fn gsb_cases() {
        let g = |good, same, bad| gsb(GsbCounts { good, same, bad });
        assert!((g(3, 5, 2).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(g(0, 7, 0).unwrap(), 0.0);
        assert_eq!(g(10, 0, 0).unwrap(), 1.0);
        assert!(matches!(g(0, 0, 0), Err(Error::EmptyCounts)));
    }

    #[test]
    fn pnr_serde() {
        for p in [Pnr::Finite(2.5), Pnr::PosInf, Pnr::AllTied] {
            let s = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<Pnr>(&s).unwrap(), p);
        }
    }
}
