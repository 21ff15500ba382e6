//! Ranking of policies per sweep value and checks of the containment
//! chain `opt_wait ≥ every family`, `state_ind ≥ cw ≥ zw`.

use std::collections::BTreeMap;
use std::fmt;

use crate::numeric::fmt_sig;
use crate::policy::PolicyFamily;

use super::ExperimentError;

pub const CONTAINMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub sweep_value: f64,
    /// Best first; equal values keep the dataset order.
    pub policies: Vec<(PolicyFamily, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub sweep_value: f64,
    pub better: PolicyFamily,
    pub worse: PolicyFamily,
    /// `mbf(worse) − mbf(better)`, above the tolerance.
    pub gap: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sweep value {}: expected {} >= {} but {} exceeds it by {:e}",
            fmt_sig(self.sweep_value, 9),
            self.better,
            self.worse,
            self.worse,
            self.gap
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rankings: Vec<Ranking>,
    pub violations: Vec<Violation>,
}

impl CompareReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mbf(&self, sweep_value: f64, policy: PolicyFamily) -> Option<f64> {
        self.rankings
            .iter()
            .find(|r| r.sweep_value == sweep_value)?
            .policies
            .iter()
            .find(|(p, _)| *p == policy)
            .map(|(_, v)| *v)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rankings {
            write!(f, "{}:", fmt_sig(r.sweep_value, 9))?;
            for (p, v) in &r.policies {
                write!(f, " {p}={}", fmt_sig(*v, 9))?;
            }
            writeln!(f)?;
        }
        if self.violations.is_empty() {
            writeln!(f, "containment chain holds")
        } else {
            for v in &self.violations {
                writeln!(f, "violation: {v}")?;
            }
            Ok(())
        }
    }
}

/// Ranks the policies of a run dataset and checks the containment chain
/// with tolerance [`CONTAINMENT_TOL`].
pub fn compare_policies<R: std::io::Read>(dataset: R) -> Result<CompareReport, ExperimentError> {
    let mut reader = csv::Reader::from_reader(dataset);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ExperimentError::MissingColumn(name.to_string()))
    };
    let (c_value, c_policy, c_mbf) = (col("sweep_value")?, col("policy")?, col("mbf_analytic")?);

    // Keyed by the sweep value's bit pattern, kept in first-seen order.
    let mut order: Vec<u64> = Vec::new();
    let mut groups: BTreeMap<u64, Vec<(PolicyFamily, f64)>> = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |c: usize| rec.get(c).unwrap_or_default();
        let bad = |what: &str| ExperimentError::Dataset(format!("row {}: bad {what}", line + 2));
        let value: f64 = field(c_value).parse().map_err(|_| bad("sweep_value"))?;
        let policy: PolicyFamily = field(c_policy).parse().map_err(|_| bad("policy"))?;
        let mbf: f64 = field(c_mbf).parse().map_err(|_| bad("mbf_analytic"))?;
        let key = value.to_bits();
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push((policy, mbf));
    }
    let distinct: std::collections::BTreeSet<PolicyFamily> =
        groups.values().flatten().map(|(p, _)| *p).collect();
    if distinct.len() < 2 {
        return Err(ExperimentError::Dataset(
            "need at least two policies to compare".into(),
        ));
    }

    let mut rankings = Vec::new();
    let mut violations = Vec::new();
    for key in order {
        let sweep_value = f64::from_bits(key);
        let rows = &groups[&key];
        let get = |p: PolicyFamily| rows.iter().find(|(q, _)| *q == p).map(|(_, v)| *v);
        let mut check = |better: PolicyFamily, worse: PolicyFamily| {
            if let (Some(b), Some(w)) = (get(better), get(worse)) {
                if w - b > CONTAINMENT_TOL {
                    violations.push(Violation {
                        sweep_value,
                        better,
                        worse,
                        gap: w - b,
                    });
                }
            }
        };
        for p in PolicyFamily::ALL {
            if p != PolicyFamily::OptWait {
                check(PolicyFamily::OptWait, p);
            }
        }
        check(PolicyFamily::StateIndependent, PolicyFamily::ConstantWait);
        check(PolicyFamily::ConstantWait, PolicyFamily::ZeroWait);

        let mut policies = rows.clone();
        policies.sort_by(|a, b| b.1.total_cmp(&a.1));
        rankings.push(Ranking {
            sweep_value,
            policies,
        });
    }
    Ok(CompareReport {
        rankings,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "sweep_value,policy,mbf_analytic,mbf_sim,sim_stderr,policy_summary\n";

    #[test]
    fn ranks_and_accepts_consistent_data() {
        let csv = format!(
            "{HEADER}0.5,zw,0.90,,,zero-wait\n0.5,cw,0.91,,,w=0.2\n0.5,opt_wait,0.95,,,x\n0.5,state_ind,0.93,,,x\n"
        );
        let r = compare_policies(csv.as_bytes()).unwrap();
        assert!(r.is_consistent());
        let order: Vec<_> = r.rankings[0].policies.iter().map(|(p, _)| *p).collect();
        assert_eq!(
            order,
            [
                PolicyFamily::OptWait,
                PolicyFamily::StateIndependent,
                PolicyFamily::ConstantWait,
                PolicyFamily::ZeroWait
            ]
        );
        assert_eq!(r.mbf(0.5, PolicyFamily::ConstantWait), Some(0.91));
    }

    #[test]
    fn flags_violations_beyond_tolerance() {
        let csv = format!("{HEADER}1,zw,0.9000005,,,a\n1,cw,0.9,,,b\n2,opt_wait,0.8,,,c\n2,delay_ind,0.81,,,d\n");
        let r = compare_policies(csv.as_bytes()).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].worse, PolicyFamily::DelayIndependent);
    }

    #[test]
    fn missing_column_and_single_policy() {
        let csv = "sweep_value,policy\n1,zw\n";
        assert!(matches!(
            compare_policies(csv.as_bytes()),
            Err(ExperimentError::MissingColumn(c)) if c == "mbf_analytic"
        ));
        let one = format!("{HEADER}1,zw,0.9,,,a\n2,zw,0.8,,,a\n");
        assert!(matches!(compare_policies(one.as_bytes()), Err(ExperimentError::Dataset(_))));
    }
}
