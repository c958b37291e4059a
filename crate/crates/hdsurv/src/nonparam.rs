//! Nonparametric survival estimators: step functions, Kaplan-Meier,
//! Nelson-Aalen, the two-sample log-rank test, and Harrell's C-index.

use crate::error::{Error, Result};
use crate::util::{argsort, chi_square_1df_sf};
use serde::{Deserialize, Serialize};

/// Right-continuous piecewise-constant function. `eval(t)` returns
/// `left_value` for t below the first knot and `values[i]` on
/// [knots[i], knots[i+1]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub left_value: f64,
}

impl StepFunction {
    pub fn new(knots: Vec<f64>, values: Vec<f64>, left_value: f64) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::validation("knots and values length mismatch"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("knots must be strictly increasing"));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) || !left_value.is_finite() {
            return Err(Error::validation("step function values must be finite"));
        }
        Ok(StepFunction {
            knots,
            values,
            left_value,
        })
    }

    pub fn constant(value: f64) -> Self {
        StepFunction {
            knots: Vec::new(),
            values: Vec::new(),
            left_value: value,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|k| *k <= t);
        if idx == 0 {
            self.left_value
        } else {
            self.values[idx - 1]
        }
    }

    /// Integral over the finite interval [a, b]; the function is treated as
    /// constant at `values.last()` beyond the final knot.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut cursor = a;
        let mut idx = self.knots.partition_point(|k| *k <= a);
        while cursor < b {
            let seg_end = if idx < self.knots.len() {
                self.knots[idx].min(b)
            } else {
                b
            };
            let value = if idx == 0 {
                self.left_value
            } else {
                self.values[idx - 1]
            };
            total += value * (seg_end - cursor);
            cursor = seg_end;
            idx += 1;
        }
        total
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().unwrap_or(&self.left_value)
    }
}

/// Distinct event times with event and at-risk counts, shared by the
/// Kaplan-Meier, Nelson-Aalen, and log-rank computations.
fn event_table(times: &[f64], events: &[bool]) -> Result<Vec<(f64, usize, usize)>> {
    if times.is_empty() || times.len() != events.len() {
        return Err(Error::validation("times and events must be equal, non-empty"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::validation("times must be finite"));
    }
    let order = argsort(times);
    let n = times.len();
    let mut table = Vec::new();
    let mut pos = 0;
    while pos < n {
        let t = times[order[pos]];
        let mut deaths = 0;
        let mut tied = 0;
        while pos + tied < n && times[order[pos + tied]] == t {
            if events[order[pos + tied]] {
                deaths += 1;
            }
            tied += 1;
        }
        if deaths > 0 {
            table.push((t, deaths, n - pos));
        }
        pos += tied;
    }
    Ok(table)
}

/// Kaplan-Meier survival curve, S(t) = prod over event times <= t of
/// (1 - d/n). Left value is 1.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    let table = event_table(times, events)?;
    let mut s = 1.0;
    let mut knots = Vec::with_capacity(table.len());
    let mut values = Vec::with_capacity(table.len());
    for (t, d, n) in table {
        s *= 1.0 - d as f64 / n as f64;
        knots.push(t);
        values.push(s);
    }
    StepFunction::new(knots, values, 1.0)
}

/// Nelson-Aalen cumulative hazard, H(t) = sum over event times <= t of d/n.
pub fn nelson_aalen(times: &[f64], events: &[bool]) -> Result<StepFunction> {
    let table = event_table(times, events)?;
    let mut h = 0.0;
    let mut knots = Vec::with_capacity(table.len());
    let mut values = Vec::with_capacity(table.len());
    for (t, d, n) in table {
        h += d as f64 / n as f64;
        knots.push(t);
        values.push(h);
    }
    StepFunction::new(knots, values, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRankTest {
    pub statistic: f64,
    pub p_value: f64,
    /// O - E for the group flagged true, hypergeometric variance.
    pub observed_minus_expected: f64,
    pub variance: f64,
}

/// Log-rank core over a caller-supplied time ordering; used directly by the
/// tree splitter, which sorts each node once and scans many splits.
pub(crate) fn logrank_with_order(
    order: &[usize],
    times: &[f64],
    events: &[bool],
    in_group: &[bool],
) -> LogRankTest {
    let n_total = order.len();
    let mut n1 = order.iter().filter(|&&i| in_group[i]).count();
    let mut n = n_total;
    let mut o_minus_e = 0.0;
    let mut variance = 0.0;
    let mut pos = 0;
    while pos < n_total {
        let t = times[order[pos]];
        let mut d = 0usize;
        let mut d1 = 0usize;
        let mut tied = 0usize;
        let mut leave1 = 0usize;
        while pos + tied < n_total && times[order[pos + tied]] == t {
            let i = order[pos + tied];
            if events[i] {
                d += 1;
                if in_group[i] {
                    d1 += 1;
                }
            }
            if in_group[i] {
                leave1 += 1;
            }
            tied += 1;
        }
        if d > 0 {
            let frac = n1 as f64 / n as f64;
            o_minus_e += d1 as f64 - d as f64 * frac;
            if n > 1 {
                variance +=
                    d as f64 * frac * (1.0 - frac) * (n - d) as f64 / (n - 1) as f64;
            }
        }
        n -= tied;
        n1 -= leave1;
        pos += tied;
    }
    let statistic = if variance > 0.0 {
        o_minus_e * o_minus_e / variance
    } else {
        0.0
    };
    let p_value = if variance > 0.0 {
        chi_square_1df_sf(statistic)
    } else {
        1.0
    };
    LogRankTest {
        statistic,
        p_value,
        observed_minus_expected: o_minus_e,
        variance,
    }
}

/// Two-sample log-rank test. `in_group` flags membership in the first group;
/// both groups must be non-empty.
pub fn logrank(times: &[f64], events: &[bool], in_group: &[bool]) -> Result<LogRankTest> {
    if times.len() != events.len() || times.len() != in_group.len() {
        return Err(Error::validation("logrank inputs must have equal length"));
    }
    if times.is_empty() {
        return Err(Error::validation("logrank needs at least one observation"));
    }
    let k = in_group.iter().filter(|&&g| g).count();
    if k == 0 || k == times.len() {
        return Err(Error::validation("logrank requires two non-empty groups"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::validation("times must be finite"));
    }
    let order = argsort(times);
    Ok(logrank_with_order(&order, times, events, in_group))
}

/// Harrell's concordance index. A pair (i, j) is comparable when
/// Y_i < Y_j and subject i had an event; it is concordant when the
/// higher-risk score belongs to the earlier failure, with ties in score
/// counting one half.
pub fn c_index(times: &[f64], events: &[bool], risk_scores: &[f64]) -> Result<f64> {
    if times.len() != events.len() || times.len() != risk_scores.len() {
        return Err(Error::validation("c_index inputs must have equal length"));
    }
    let n = times.len();
    let mut comparable = 0.0;
    let mut concordant = 0.0;
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if times[i] < times[j] {
                comparable += 1.0;
                if risk_scores[i] > risk_scores[j] {
                    concordant += 1.0;
                } else if risk_scores[i] == risk_scores[j] {
                    concordant += 0.5;
                }
            }
        }
    }
    if comparable == 0.0 {
        return Err(Error::validation("no comparable pairs for concordance"));
    }
    Ok(concordant / comparable)
}
