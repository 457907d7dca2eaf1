use serde::{Deserialize, Serialize};

use super::{EvalError, PredictionSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Pairs model A gets right and model B gets wrong.
    pub b: u64,
    /// Pairs model A gets wrong and model B gets right.
    pub c: u64,
    pub statistic: f64,
    pub p_value: f64,
    pub corrected: bool,
}

impl McNemarResult {
    pub fn from_counts(b: u64, c: u64, corrected: bool) -> Self {
        let n = b + c;
        let statistic = if n == 0 {
            0.0
        } else {
            let diff = b.abs_diff(c);
            let d = if corrected { diff.saturating_sub(1) } else { diff };
            (d as f64) * (d as f64) / n as f64
        };
        // chi-square with one degree of freedom
        let p_value = libm::erfc((statistic / 2.0).sqrt());
        Self {
            b,
            c,
            statistic,
            p_value,
            corrected,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("mcnemar serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        format!(
            "b (A right, B wrong) {}\nc (A wrong, B right) {}\nstatistic            {:.6}\np-value              {:.6e}\ncorrection           {}\n",
            self.b,
            self.c,
            self.statistic,
            self.p_value,
            if self.corrected { "on" } else { "off" }
        )
    }
}

/// Records of both sets in key order, checked for identical keys and labels.
fn aligned<'a>(
    a: &'a PredictionSet,
    b: &'a PredictionSet,
) -> Result<Vec<(usize, usize)>, EvalError> {
    let order = |s: &PredictionSet| -> Result<Vec<usize>, EvalError> {
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.sort_by(|&i, &j| {
            let (x, y) = (&s.records[i], &s.records[j]);
            (&x.aui1, &x.aui2).cmp(&(&y.aui1, &y.aui2))
        });
        for w in idx.windows(2) {
            let (x, y) = (&s.records[w[0]], &s.records[w[1]]);
            if x.aui1 == y.aui1 && x.aui2 == y.aui2 {
                return Err(EvalError::DuplicateKey(x.key()));
            }
        }
        Ok(idx)
    };
    let (oa, ob) = (order(a)?, order(b)?);
    let mut out = Vec::with_capacity(oa.len());
    for k in 0..oa.len().max(ob.len()) {
        match (oa.get(k), ob.get(k)) {
            (Some(&i), Some(&j)) => {
                let (x, y) = (&a.records[i], &b.records[j]);
                if x.aui1 != y.aui1 || x.aui2 != y.aui2 {
                    let first = if (&x.aui1, &x.aui2) < (&y.aui1, &y.aui2) { x.key() } else { y.key() };
                    return Err(EvalError::KeyMismatch(first));
                }
                if x.label != y.label {
                    return Err(EvalError::LabelMismatch(x.key()));
                }
                out.push((i, j));
            }
            (Some(&i), None) => return Err(EvalError::KeyMismatch(a.records[i].key())),
            (None, Some(&j)) => return Err(EvalError::KeyMismatch(b.records[j].key())),
            (None, None) => unreachable!(),
        }
    }
    Ok(out)
}

/// Compares per-pair correctness of two prediction sets.
pub fn mcnemar(a: &PredictionSet, b: &PredictionSet, corrected: bool) -> Result<McNemarResult, EvalError> {
    let (mut nb, mut nc) = (0u64, 0u64);
    for (i, j) in aligned(a, b)? {
        let truth = a.records[i].label;
        let ra = a.predicted(i) == truth;
        let rb = b.predicted(j) == truth;
        match (ra, rb) {
            (true, false) => nb += 1,
            (false, true) => nc += 1,
            _ => {}
        }
    }
    Ok(McNemarResult::from_counts(nb, nc, corrected))
}

/// 2×2 table indexed `[A correct][B correct]`.
pub fn contingency_table(a: &PredictionSet, b: &PredictionSet) -> Result<[[u64; 2]; 2], EvalError> {
    let mut table = [[0u64; 2]; 2];
    for (i, j) in aligned(a, b)? {
        let truth = a.records[i].label;
        table[usize::from(a.predicted(i) == truth)][usize::from(b.predicted(j) == truth)] += 1;
    }
    Ok(table)
}

pub fn mcnemar_from_table(table: &[[u64; 2]; 2], corrected: bool) -> McNemarResult {
    McNemarResult::from_counts(table[1][0], table[0][1], corrected)
}
