//! Waiting functions `W(i, d)`: how long the monitor idles after a reply
//! reporting state `i` with age `d`, before it sends the next query.
//!
//! States are 0-based in the API and printed 1-based in tables and
//! summaries.

use std::fmt::Write as _;

use crate::numeric::fmt_sig;

/// Wait as a function of the reply age only.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayRule {
    /// `(delay, wait)` rows sorted by delay; an age between rows takes the
    /// wait of the nearest row (the smaller delay on a tie).
    Table(Vec<(f64, f64)>),
    /// `W(d) = min{w_max, (Γ − d)^+}`; `Γ = ∞` waits `w_max` for every age.
    Threshold(f64),
}

impl DelayRule {
    pub fn wait(&self, d: f64, w_max: f64) -> f64 {
        match self {
            DelayRule::Table(rows) => {
                let k = rows.partition_point(|(x, _)| *x < d);
                let pick = if k == 0 {
                    0
                } else if k == rows.len() {
                    rows.len() - 1
                } else if (d - rows[k - 1].0) <= (rows[k].0 - d) {
                    k - 1
                } else {
                    k
                };
                rows[pick].1
            }
            DelayRule::Threshold(gamma) => {
                if gamma.is_infinite() {
                    w_max
                } else {
                    (gamma - d).max(0.0).min(w_max)
                }
            }
        }
    }

    /// Ages where the rule is not smooth.
    pub fn breakpoints(&self, w_max: f64) -> Vec<f64> {
        match self {
            DelayRule::Table(rows) => rows.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)).collect(),
            DelayRule::Threshold(gamma) if gamma.is_finite() => {
                vec![(gamma - w_max).max(0.0), *gamma]
            }
            DelayRule::Threshold(_) => Vec::new(),
        }
    }

    fn validate(&self, w_max: f64) -> Result<(), String> {
        match self {
            DelayRule::Table(rows) => {
                if rows.is_empty() {
                    return Err("empty delay table".into());
                }
                for w in rows.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err("delay table rows must be strictly increasing".into());
                    }
                }
                for &(d, w) in rows {
                    if !(d >= 0.0 && d.is_finite()) {
                        return Err(format!("invalid delay {d} in table"));
                    }
                    check_wait(w, w_max)?;
                }
                Ok(())
            }
            DelayRule::Threshold(gamma) => {
                if gamma.is_nan() || *gamma < 0.0 {
                    Err(format!("invalid threshold {gamma}"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn summary(&self, w_max: f64, out: &mut String, prefix: &str) {
        match self {
            DelayRule::Table(rows) => {
                for (k, (d, w)) in rows.iter().enumerate() {
                    if k > 0 || !out.is_empty() {
                        out.push('|');
                    }
                    let _ = write!(out, "{prefix}d={}:w={}", fmt_sig(*d, 6), fmt_sig(*w, 6));
                }
            }
            DelayRule::Threshold(gamma) => {
                if !out.is_empty() {
                    out.push('|');
                }
                if gamma.is_infinite() {
                    let _ = write!(out, "{prefix}gamma=inf:w={}", fmt_sig(w_max, 6));
                } else {
                    let _ = write!(out, "{prefix}gamma={}", fmt_sig(*gamma, 9));
                }
            }
        }
    }
}

fn check_wait(w: f64, w_max: f64) -> Result<(), String> {
    if !(0.0..=w_max).contains(&w) {
        Err(format!("wait {w} outside [0, {w_max}]"))
    } else {
        Ok(())
    }
}

/// The structural family of a waiting function.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyForm {
    ZeroWait,
    ConstantWait(f64),
    StateIndependent(DelayRule),
    /// One wait per state.
    DelayIndependent(Vec<f64>),
    /// One delay rule per state.
    Full(Vec<DelayRule>),
}

/// A bounded waiting function `0 ≤ W(i, d) ≤ w_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitingPolicy {
    pub form: PolicyForm,
    pub w_max: f64,
}

/// One row of the serialized wait table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyRow {
    pub state: Option<usize>,
    pub delay: Option<f64>,
    pub wait: f64,
}

impl WaitingPolicy {
    pub fn new(form: PolicyForm, w_max: f64) -> Self {
        Self { form, w_max }
    }

    pub fn zero_wait(w_max: f64) -> Self {
        Self::new(PolicyForm::ZeroWait, w_max)
    }

    pub fn constant(w: f64, w_max: f64) -> Self {
        Self::new(PolicyForm::ConstantWait(w), w_max)
    }

    pub fn wait(&self, i: usize, d: f64) -> f64 {
        match &self.form {
            PolicyForm::ZeroWait => 0.0,
            PolicyForm::ConstantWait(w) => *w,
            PolicyForm::StateIndependent(rule) => rule.wait(d, self.w_max),
            PolicyForm::DelayIndependent(ws) => ws[i],
            PolicyForm::Full(rules) => rules[i].wait(d, self.w_max),
        }
    }

    /// True when `W(i, d)` does not depend on `i`.
    pub fn is_state_independent(&self) -> bool {
        match &self.form {
            PolicyForm::ZeroWait | PolicyForm::ConstantWait(_) | PolicyForm::StateIndependent(_) => {
                true
            }
            PolicyForm::DelayIndependent(ws) => ws.windows(2).all(|w| w[0] == w[1]),
            PolicyForm::Full(rules) => rules.windows(2).all(|r| r[0] == r[1]),
        }
    }

    pub fn delay_breakpoints(&self, i: usize) -> Vec<f64> {
        match &self.form {
            PolicyForm::StateIndependent(rule) => rule.breakpoints(self.w_max),
            PolicyForm::Full(rules) => rules[i].breakpoints(self.w_max),
            _ => Vec::new(),
        }
    }

    pub fn validate(&self, states: usize) -> Result<(), String> {
        if !(self.w_max >= 0.0 && self.w_max.is_finite()) {
            return Err(format!("invalid w_max {}", self.w_max));
        }
        match &self.form {
            PolicyForm::ZeroWait => Ok(()),
            PolicyForm::ConstantWait(w) => check_wait(*w, self.w_max),
            PolicyForm::StateIndependent(rule) => rule.validate(self.w_max),
            PolicyForm::DelayIndependent(ws) => {
                if ws.len() != states {
                    return Err(format!("{} waits for {states} states", ws.len()));
                }
                ws.iter().try_for_each(|w| check_wait(*w, self.w_max))
            }
            PolicyForm::Full(rules) => {
                if rules.len() != states {
                    return Err(format!("{} delay rules for {states} states", rules.len()));
                }
                rules.iter().try_for_each(|r| r.validate(self.w_max))
            }
        }
    }

    /// Wait table: `(state, delay, wait)` for full policies, `(delay, wait)`
    /// for state-independent ones, `(state, wait)` for delay-independent
    /// ones and a single scalar otherwise. Rules are tabulated at
    /// `delay_atoms`.
    pub fn table_rows(&self, states: usize, delay_atoms: &[f64]) -> Vec<PolicyRow> {
        match &self.form {
            PolicyForm::ZeroWait | PolicyForm::ConstantWait(_) => vec![PolicyRow {
                state: None,
                delay: None,
                wait: self.wait(0, 0.0),
            }],
            PolicyForm::StateIndependent(rule) => delay_atoms
                .iter()
                .map(|&d| PolicyRow {
                    state: None,
                    delay: Some(d),
                    wait: rule.wait(d, self.w_max),
                })
                .collect(),
            PolicyForm::DelayIndependent(ws) => ws
                .iter()
                .enumerate()
                .map(|(i, &w)| PolicyRow {
                    state: Some(i),
                    delay: None,
                    wait: w,
                })
                .collect(),
            PolicyForm::Full(rules) => (0..states)
                .flat_map(|i| {
                    delay_atoms.iter().map(move |&d| PolicyRow {
                        state: Some(i),
                        delay: Some(d),
                        wait: rules[i].wait(d, self.w_max),
                    })
                })
                .collect(),
        }
    }

    /// Compact one-line description, free of commas.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        match &self.form {
            PolicyForm::ZeroWait => out.push_str("zero-wait"),
            PolicyForm::ConstantWait(w) => {
                let _ = write!(out, "w={}", fmt_sig(*w, 9));
            }
            PolicyForm::StateIndependent(rule) => rule.summary(self.w_max, &mut out, ""),
            PolicyForm::DelayIndependent(ws) => {
                for (i, w) in ws.iter().enumerate() {
                    if i > 0 {
                        out.push('|');
                    }
                    let _ = write!(out, "s{}:w={}", i + 1, fmt_sig(*w, 9));
                }
            }
            PolicyForm::Full(rules) => {
                for (i, rule) in rules.iter().enumerate() {
                    rule.summary(self.w_max, &mut out, &format!("s{}:", i + 1));
                }
            }
        }
        out
    }
}

/// Renders rows as a whitespace-aligned text table (states 1-based).
pub fn format_table(rows: &[PolicyRow]) -> String {
    let mut out = String::new();
    let has_state = rows.iter().any(|r| r.state.is_some());
    let has_delay = rows.iter().any(|r| r.delay.is_some());
    if has_state {
        out.push_str("state\t");
    }
    if has_delay {
        out.push_str("delay\t");
    }
    out.push_str("wait\n");
    for r in rows {
        if let Some(s) = r.state {
            let _ = write!(out, "{}\t", s + 1);
        }
        if let Some(d) = r.delay {
            let _ = write!(out, "{}\t", fmt_sig(d, 9));
        }
        let _ = writeln!(out, "{}", fmt_sig(r.wait, 9));
    }
    out
}
