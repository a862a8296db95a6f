//! Experiment configuration: a flat `key = value` format with dotted
//! section prefixes.
//!
//! ```text
//! # two-armed Bernoulli reference instance
//! instance.family = bernoulli
//! instance.means = 0.8, 0.5
//! policies = expts, expts+, kl-ucb
//! horizon = 100000
//! replications = 2000
//! base_seed = 1
//! ```
//!
//! `#` starts a comment (full-line or trailing), blank lines are ignored,
//! keys may appear once, and lists may optionally be wrapped in brackets
//! (`[0.8, 0.5]`). Parsing collects *all* problems instead of stopping at
//! the first, so a bad file is fixed in one pass.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::family::{BanditInstance, ExpFamilyModel};
use crate::policy::PolicyKind;
use crate::simulate::DEFAULT_CHECKPOINT_RATIO;

/// One problem found while parsing or validating a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigProblem {
    /// 1-based line of the offending entry, when attributable.
    pub line: Option<usize>,
    /// The key involved, when attributable.
    pub key: Option<String>,
    /// Human-readable description.
    pub message: String,
}

impl fmt::Display for ConfigProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "`{key}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

/// Every problem of an invalid configuration, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigFailure {
    /// The collected problems; never empty.
    pub problems: Vec<ConfigProblem>,
}

impl fmt::Display for ConfigFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.problems.len())?;
        for p in &self.problems {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    /// The bandit instance to simulate.
    pub instance: BanditInstance,
    /// Policies to run, each exactly once.
    pub policies: Vec<PolicyKind>,
    /// Episode length.
    pub horizon: u64,
    /// Number of episodes per policy.
    pub replications: u64,
    /// Base seed of the replication seed stream.
    pub base_seed: u64,
    /// Geometric checkpoint ratio.
    pub checkpoint_ratio: f64,
    /// Directory that receives the per-policy CSV files and the manifest.
    pub output_path: PathBuf,
}

/// Accumulates raw `key = (value, line)` entries plus problems.
struct RawEntries {
    entries: BTreeMap<String, (String, usize)>,
    problems: Vec<ConfigProblem>,
}

impl RawEntries {
    fn problem(&mut self, line: Option<usize>, key: Option<&str>, message: impl Into<String>) {
        self.problems.push(ConfigProblem {
            line,
            key: key.map(str::to_owned),
            message: message.into(),
        });
    }

    /// Removes and returns the entry for `key`, if present.
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }
}

fn scan(text: &str) -> RawEntries {
    let mut raw = RawEntries { entries: BTreeMap::new(), problems: Vec::new() };
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let stripped = match line.split_once('#') {
            Some((before, _)) => before,
            None => line,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            raw.problem(Some(lineno), None, format!("expected `key = value`, got `{stripped}`"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            raw.problem(Some(lineno), None, "missing key before `=`");
            continue;
        }
        if let Some((_, first)) = raw.entries.get(key) {
            let message = format!("duplicate key (first set on line {first})");
            raw.problem(Some(lineno), Some(key), message);
            continue;
        }
        raw.entries.insert(key.to_owned(), (value.to_owned(), lineno));
    }
    raw
}

fn parse_scalar<T: std::str::FromStr>(
    raw: &mut RawEntries,
    key: &str,
    what: &str,
) -> Option<(T, usize)>
where
    T::Err: fmt::Display,
{
    let (value, line) = raw.take(key)?;
    match value.parse::<T>() {
        Ok(v) => Some((v, line)),
        Err(e) => {
            raw.problem(Some(line), Some(key), format!("invalid {what} `{value}`: {e}"));
            None
        }
    }
}

fn parse_list<T: std::str::FromStr>(raw: &mut RawEntries, key: &str, what: &str) -> Option<(Vec<T>, usize)>
where
    T::Err: fmt::Display,
{
    let (value, line) = raw.take(key)?;
    // Lists may optionally be wrapped in brackets: `[a, b]` == `a, b`.
    let value = value
        .trim()
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .unwrap_or(&value);
    let mut items = Vec::new();
    let mut ok = true;
    for piece in value.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            raw.problem(Some(line), Some(key), "empty list entry");
            ok = false;
            continue;
        }
        match piece.parse::<T>() {
            Ok(v) => items.push(v),
            Err(e) => {
                raw.problem(Some(line), Some(key), format!("invalid {what} `{piece}`: {e}"));
                ok = false;
            }
        }
    }
    if ok && items.is_empty() {
        raw.problem(Some(line), Some(key), "list must not be empty");
        ok = false;
    }
    ok.then_some((items, line))
}

/// Parses and fully validates a configuration.
///
/// Required keys: `instance.family`, `instance.means`, `policies`,
/// `horizon`. Optional with defaults: `instance.variance_cap` (exact
/// maximum of `V` over the closed mean interval), `replications` (100),
/// `base_seed` (0), `checkpoint_ratio` (`10^(1/8)`), `output.path`
/// (`results`). On failure, every detected problem is reported.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigFailure> {
    let mut raw = scan(text);

    let family = parse_scalar::<ExpFamilyModel>(&mut raw, "instance.family", "family tag");
    let means = parse_list::<f64>(&mut raw, "instance.means", "mean");
    let cap = parse_scalar::<f64>(&mut raw, "instance.variance_cap", "variance cap");
    let policies = parse_list::<PolicyKind>(&mut raw, "policies", "policy tag");
    let horizon = parse_scalar::<u64>(&mut raw, "horizon", "horizon");
    let replications = parse_scalar::<u64>(&mut raw, "replications", "replication count");
    let base_seed = parse_scalar::<u64>(&mut raw, "base_seed", "seed");
    let ratio = parse_scalar::<f64>(&mut raw, "checkpoint_ratio", "checkpoint ratio");
    let output_path = raw.take("output.path");

    for (key, (_, line)) in std::mem::take(&mut raw.entries) {
        raw.problem(Some(line), Some(&key), "unknown key");
    }

    for &(key, present) in &[
        ("instance.family", family.is_some()),
        ("instance.means", means.is_some()),
        ("policies", policies.is_some()),
        ("horizon", horizon.is_some()),
    ] {
        // Only report keys that are absent altogether; parse failures above
        // already produced a targeted problem.
        if !present && !raw.problems.iter().any(|p| p.key.as_deref() == Some(key)) {
            raw.problem(None, Some(key), "required key is missing");
        }
    }

    // Cross-field validation, skipped where the pieces already failed.
    let instance = match (family, means) {
        (Some((family, fline)), Some((means, mline))) => {
            let cap_value = match cap {
                Some((c, cline)) => Some((c, Some(cline))),
                None => {
                    let (lo, hi) = means.iter().fold(
                        (f64::INFINITY, f64::NEG_INFINITY),
                        |(lo, hi), &m| (lo.min(m), hi.max(m)),
                    );
                    match family.max_variance_on(lo, hi) {
                        Ok(v) => Some((v, None)),
                        // The means are invalid; instance construction
                        // below reports the precise arm.
                        Err(_) => Some((f64::NAN, None)),
                    }
                }
            };
            match cap_value {
                Some((c, cline)) => match BanditInstance::new(family, means, c) {
                    Ok(instance) => Some(instance),
                    Err(e) => {
                        use crate::family::InstanceError;
                        let (line, key) = match &e {
                            InstanceError::ArmMean { .. } | InstanceError::EmptyMeans => {
                                (Some(mline), "instance.means")
                            }
                            InstanceError::BadCap(_) | InstanceError::CapTooSmall { .. } => {
                                (cline.or(Some(fline)), "instance.variance_cap")
                            }
                        };
                        raw.problem(line, Some(key), e.to_string());
                        None
                    }
                },
                None => None,
            }
        }
        _ => None,
    };

    let policies = policies.and_then(|(list, line)| {
        let mut ok = true;
        let mut seen = Vec::new();
        for p in &list {
            if seen.contains(p) {
                raw.problem(Some(line), Some("policies"), format!("policy `{p}` listed twice"));
                ok = false;
            }
            seen.push(*p);
            if let Some(instance) = &instance {
                if let Err(e) = p.validate_family(instance.family()) {
                    raw.problem(Some(line), Some("policies"), e.to_string());
                    ok = false;
                }
            }
        }
        ok.then_some(list)
    });

    let horizon = horizon.and_then(|(h, line)| {
        if h >= 1 {
            Some(h)
        } else {
            raw.problem(Some(line), Some("horizon"), "horizon must be at least 1");
            None
        }
    });

    let replications = match replications {
        Some((r, line)) => {
            if r >= 1 {
                Some(r)
            } else {
                raw.problem(Some(line), Some("replications"), "replications must be at least 1");
                None
            }
        }
        None => Some(100),
    };

    let checkpoint_ratio = match ratio {
        Some((r, line)) => {
            if r.is_finite() && r > 1.0 {
                Some(r)
            } else {
                raw.problem(
                    Some(line),
                    Some("checkpoint_ratio"),
                    "checkpoint ratio must be finite and greater than 1",
                );
                None
            }
        }
        None => Some(DEFAULT_CHECKPOINT_RATIO),
    };

    let output_path = match output_path {
        Some((p, line)) => {
            if p.is_empty() {
                raw.problem(Some(line), Some("output.path"), "output path must not be empty");
                None
            } else {
                Some(PathBuf::from(p))
            }
        }
        None => Some(PathBuf::from("results")),
    };

    let base_seed = base_seed.map(|(s, _)| s).unwrap_or(0);

    match (instance, policies, horizon, replications, checkpoint_ratio, output_path) {
        (Some(instance), Some(policies), Some(horizon), Some(replications), Some(ratio), Some(path))
            if raw.problems.is_empty() =>
        {
            Ok(ExperimentConfig {
                instance,
                policies,
                horizon,
                replications,
                base_seed,
                checkpoint_ratio: ratio,
                output_path: path,
            })
        }
        _ => {
            debug_assert!(!raw.problems.is_empty());
            Err(ConfigFailure { problems: raw.problems })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# reference experiment
instance.family = bernoulli
instance.means = 0.8, 0.5
instance.variance_cap = 0.25
policies = expts, expts+, kl-ucb   # trailing comment
horizon = 1000
replications = 16
base_seed = 7
checkpoint_ratio = 2.0
output.path = out/run1
";

    #[test]
    fn full_config_parses() {
        let cfg = parse_config(FULL).unwrap();
        assert_eq!(cfg.instance.family(), &ExpFamilyModel::Bernoulli);
        assert_eq!(cfg.instance.means(), &[0.8, 0.5]);
        assert_eq!(cfg.instance.variance_cap(), 0.25);
        assert_eq!(
            cfg.policies,
            vec![PolicyKind::ExpTs, PolicyKind::ExpTsPlus, PolicyKind::KlUcb]
        );
        assert_eq!(cfg.horizon, 1000);
        assert_eq!(cfg.replications, 16);
        assert_eq!(cfg.base_seed, 7);
        assert_eq!(cfg.checkpoint_ratio, 2.0);
        assert_eq!(cfg.output_path, PathBuf::from("out/run1"));
    }

    #[test]
    fn defaults_apply_when_keys_are_omitted() {
        let cfg = parse_config(
            "instance.family = gaussian:2\n\
             instance.means = 0.3, -0.1, 0.0\n\
             policies = expts+\n\
             horizon = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.replications, 100);
        assert_eq!(cfg.base_seed, 0);
        assert_eq!(cfg.checkpoint_ratio, DEFAULT_CHECKPOINT_RATIO);
        assert_eq!(cfg.output_path, PathBuf::from("results"));
        // Default cap: exact max of V over the mean interval (constant 2).
        assert_eq!(cfg.instance.variance_cap(), 2.0);
    }

    #[test]
    fn lists_accept_optional_brackets() {
        let cfg = parse_config(
            "instance.family = bernoulli\n\
             instance.means = [0.7, 0.4]\n\
             policies = [expts, ucb1]\n\
             horizon = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.instance.means(), &[0.7, 0.4]);
        assert_eq!(cfg.policies, vec![PolicyKind::ExpTs, PolicyKind::Ucb1]);

        // A lone bracket is not stripped; the item error names it.
        let err = parse_config(
            "instance.family = bernoulli\n\
             instance.means = [0.7, 0.4\n\
             policies = expts\n\
             horizon = 50\n",
        )
        .unwrap_err();
        assert!(err.problems.iter().any(|p| p.message.contains("`[0.7`")), "{err}");
    }

    #[test]
    fn default_cap_tracks_the_variance_maximum() {
        let cfg = parse_config(
            "instance.family = bernoulli\n\
             instance.means = 0.4, 0.6\n\
             policies = expts\n\
             horizon = 10\n",
        )
        .unwrap();
        // The interval [0.4, 0.6] contains the Bernoulli variance peak.
        assert_eq!(cfg.instance.variance_cap(), 0.25);

        let cfg = parse_config(
            "instance.family = exponential\n\
             instance.means = 1.0, 3.0\n\
             policies = expts\n\
             horizon = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.instance.variance_cap(), 9.0);
    }

    #[test]
    fn every_problem_is_collected_at_once() {
        let err = parse_config(
            "instance.family = martian\n\
             instance.means = 0.8, oops\n\
             policies = expts, expts\n\
             horizon = -3\n\
             horizon = 5\n\
             mystery = 1\n\
             broken line\n",
        )
        .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 1"), "{text}");
        assert!(text.contains("unknown family tag"), "{text}");
        assert!(text.contains("invalid mean `oops`"), "{text}");
        assert!(text.contains("invalid horizon `-3`"), "{text}");
        assert!(text.contains("duplicate key"), "{text}");
        assert!(text.contains("unknown key"), "{text}");
        assert!(text.contains("expected `key = value`"), "{text}");
        assert!(err.problems.len() >= 6, "{err:?}");
        // The duplicated-policy problem is only reported once the list
        // itself parses; it is included here.
        assert!(text.contains("listed twice"), "{text}");
    }

    #[test]
    fn missing_required_keys_are_reported() {
        let err = parse_config("replications = 5\n").unwrap_err();
        let text = err.to_string();
        for key in ["instance.family", "instance.means", "policies", "horizon"] {
            assert!(text.contains(key), "missing mention of {key}: {text}");
        }
    }

    #[test]
    fn family_policy_compatibility_is_checked() {
        let err = parse_config(
            "instance.family = gaussian:1\n\
             instance.means = 0.0, 1.0\n\
             policies = bernoulli-ts\n\
             horizon = 10\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("requires the bernoulli family"), "{err}");
    }

    #[test]
    fn cap_below_the_variance_maximum_is_rejected() {
        let err = parse_config(
            "instance.family = bernoulli\n\
             instance.means = 0.4, 0.6\n\
             instance.variance_cap = 0.2\n\
             policies = expts\n\
             horizon = 10\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("below the instance variance maximum"), "{err}");
    }

    #[test]
    fn boundary_means_are_rejected_with_the_arm_index() {
        let err = parse_config(
            "instance.family = bernoulli\n\
             instance.means = 0.5, 1.0\n\
             policies = expts\n\
             horizon = 10\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("arm 1"), "{err}");
    }

    #[test]
    fn zero_horizon_and_zero_replications_are_rejected() {
        let err = parse_config(
            "instance.family = bernoulli\n\
             instance.means = 0.5\n\
             policies = expts\n\
             horizon = 0\n\
             replications = 0\n",
        )
        .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("horizon must be at least 1"), "{text}");
        assert!(text.contains("replications must be at least 1"), "{text}");
    }
}
