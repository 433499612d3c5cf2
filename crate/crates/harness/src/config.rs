//! Experiment files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! line     := blank | comment | section | entry
//! comment  := ('#' | ';') any*
//! section  := '[' name ']'
//! entry    := key '=' value
//! value    := item (',' item)*
//! ```
//!
//! Entries before the first section are defaults inherited by every section.
//! Each section is one experiment. Keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `family` | test function family | required |
//! | `d` | dimension | required |
//! | `eps` | list of target accuracies | required |
//! | `n_h` | list of Hessian budgets | required |
//! | `seeds` | list of distinct instance seeds | `0` |
//! | `oracle` | `exact`, `zero`, `noisy` or `fd` | `exact` |
//! | `delta` | oracle accuracy passed to the solver | `0` |
//! | `method` | list of `auto`, `restarted`, `reduction`, `fd` | `auto` |
//! | `mode` | `faithful` or `practical` | `faithful` |
//! | `scale` | constant relaxation for `practical`, in (0, 1] | `1` |
//! | `repeat` | runs per cell, each with its own oracle seed | `1` |
//! | `iteration_limit` | cap on outer iterations | none |
//! | `withhold_l1` | hide the gradient-Lipschitz constant | `false` |
//! | `timing` | fill `wall_ms`; breaks byte-identical output | `false` |
//! | `out` | CSV path, overridden on the command line | none |
//! | `param.<name>` | family parameter | family default |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use critpoint_core::oracle::{FamilyParams, FAMILIES};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax { path: String, line: usize, msg: String },
    #[error("[{section}] {msg}")]
    Invalid { section: String, msg: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMethod {
    Auto,
    Restarted,
    Reduction,
    Fd,
}

impl SweepMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "auto" => Some(Self::Auto),
            "restarted" => Some(Self::Restarted),
            "reduction" => Some(Self::Reduction),
            "fd" => Some(Self::Fd),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::Restarted => "restarted",
            Self::Reduction => "reduction",
            Self::Fd => "fd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstantMode {
    Faithful,
    Practical { scale: f64 },
}

impl ConstantMode {
    pub fn scale(&self) -> f64 {
        match self {
            Self::Faithful => 1.0,
            Self::Practical { scale } => *scale,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Faithful => "faithful",
            Self::Practical { .. } => "practical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub family: String,
    pub d: usize,
    pub params: FamilyParams,
    pub eps: Vec<f64>,
    pub n_h: Vec<u64>,
    pub seeds: Vec<u64>,
    pub oracle: String,
    pub delta: f64,
    pub methods: Vec<SweepMethod>,
    pub mode: ConstantMode,
    pub repeat: u32,
    pub iteration_limit: Option<u64>,
    pub withhold_l1: bool,
    pub timing: bool,
    pub out: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

pub fn parse(text: &str, origin: &str) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let mut defaults: BTreeMap<String, String> = BTreeMap::new();
    let mut sections: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let syntax = |msg: String| ConfigError::Syntax { path: origin.to_string(), line: i + 1, msg };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header".into()))?.trim();
            if name.is_empty() {
                return Err(syntax("empty section name".into()));
            }
            if sections.iter().any(|(n, _)| n == name) {
                return Err(syntax(format!("duplicate section [{name}]")));
            }
            sections.push((name.to_string(), BTreeMap::new()));
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| syntax(format!("expected key = value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(syntax("empty key".into()));
        }
        let map = match sections.last_mut() {
            Some((_, m)) => m,
            None => &mut defaults,
        };
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(syntax(format!("duplicate key '{key}'")));
        }
    }
    if sections.is_empty() {
        return Err(ConfigError::Invalid { section: origin.to_string(), msg: "no experiment sections".into() });
    }
    sections
        .into_iter()
        .map(|(name, entries)| {
            let mut merged = defaults.clone();
            merged.extend(entries);
            build(name, merged)
        })
        .collect()
}

fn build(name: String, mut kv: BTreeMap<String, String>) -> Result<ExperimentConfig, ConfigError> {
    let invalid = |msg: String| ConfigError::Invalid { section: name.clone(), msg };
    let mut take = |key: &str| kv.remove(key);

    let family = take("family").ok_or_else(|| invalid("missing 'family'".into()))?;
    if !FAMILIES.contains(&family.as_str()) {
        return Err(invalid(format!("unknown family '{family}' (expected one of {})", FAMILIES.join(", "))));
    }
    let d: usize = scalar(&take("d").ok_or_else(|| invalid("missing 'd'".into()))?, "d").map_err(&invalid)?;
    if d == 0 {
        return Err(invalid("d must be positive".into()));
    }
    let eps: Vec<f64> = list(&take("eps").ok_or_else(|| invalid("missing 'eps'".into()))?, "eps").map_err(&invalid)?;
    if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(invalid("eps values must be positive".into()));
    }
    let n_h: Vec<u64> = list(&take("n_h").ok_or_else(|| invalid("missing 'n_h'".into()))?, "n_h").map_err(&invalid)?;
    if n_h.contains(&0) {
        return Err(invalid("n_h values must be at least 1".into()));
    }
    let seeds: Vec<u64> = match take("seeds") {
        Some(v) => list(&v, "seeds").map_err(&invalid)?,
        None => vec![0],
    };
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(invalid("seeds must be distinct".into()));
    }
    let oracle = take("oracle").unwrap_or_else(|| "exact".into());
    if !["exact", "zero", "noisy", "fd"].contains(&oracle.as_str()) {
        return Err(invalid(format!("unknown oracle '{oracle}'")));
    }
    let delta: f64 = match take("delta") {
        Some(v) => scalar(&v, "delta").map_err(&invalid)?,
        None => 0.0,
    };
    let methods = match take("method") {
        Some(v) => v
            .split(',')
            .map(|s| SweepMethod::parse(s.trim()).ok_or_else(|| invalid(format!("unknown method '{}'", s.trim()))))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![SweepMethod::Auto],
    };
    let scale: f64 = match take("scale") {
        Some(v) => scalar(&v, "scale").map_err(&invalid)?,
        None => 1.0,
    };
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(invalid(format!("scale must lie in (0, 1], got {scale}")));
    }
    let mode = match take("mode").as_deref() {
        None | Some("faithful") => ConstantMode::Faithful,
        Some("practical") => ConstantMode::Practical { scale },
        Some(other) => return Err(invalid(format!("unknown mode '{other}'"))),
    };
    let repeat: u32 = match take("repeat") {
        Some(v) => scalar(&v, "repeat").map_err(&invalid)?,
        None => 1,
    };
    if repeat == 0 {
        return Err(invalid("repeat must be at least 1".into()));
    }
    let iteration_limit =
        take("iteration_limit").map(|v| scalar(&v, "iteration_limit")).transpose().map_err(&invalid)?;
    let withhold_l1 =
        take("withhold_l1").map(|v| boolean(&v, "withhold_l1")).transpose().map_err(&invalid)?.unwrap_or(false);
    let timing = take("timing").map(|v| boolean(&v, "timing")).transpose().map_err(&invalid)?.unwrap_or(false);
    let out = take("out").map(PathBuf::from);

    let mut params = FamilyParams::new();
    let rest: Vec<(String, String)> = std::mem::take(&mut kv).into_iter().collect();
    for (key, value) in rest {
        match key.strip_prefix("param.") {
            Some(p) if !p.is_empty() => params.insert(p, scalar(&value, &key).map_err(&invalid)?),
            _ => return Err(invalid(format!("unknown key '{key}'"))),
        }
    }
    Ok(ExperimentConfig {
        name,
        family,
        d,
        params,
        eps,
        n_h,
        seeds,
        oracle,
        delta,
        methods,
        mode,
        repeat,
        iteration_limit,
        withhold_l1,
        timing,
        out,
    })
}

fn scalar<T: std::str::FromStr>(s: &str, key: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("cannot parse '{s}' for '{key}'"))
}

fn list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>, String> {
    let items: Vec<T> = s.split(',').map(|p| scalar(p, key)).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(format!("'{key}' must not be empty"));
    }
    Ok(items)
}

fn boolean(s: &str, key: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("cannot parse '{s}' for '{key}' as a boolean")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# shared
oracle = exact
seeds = 3, 4

[small]
family = quad_cos
d = 5
eps = 1e-2, 1e-3
n_h = 1, 2
param.beta = 0.25

[other]
family = saddle_band
d = 3
eps = 1e-2
n_h = 4
oracle = zero
mode = practical
scale = 0.5
";

    #[test]
    fn sections_inherit_defaults() {
        let c = parse(SAMPLE, "sample").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].name, "small");
        assert_eq!(c[0].eps, vec![1e-2, 1e-3]);
        assert_eq!(c[0].seeds, vec![3, 4]);
        assert_eq!(c[0].params.iter().collect::<Vec<_>>(), vec![(&"beta".to_string(), &0.25)]);
        assert_eq!(c[1].oracle, "zero");
        assert_eq!(c[1].mode, ConstantMode::Practical { scale: 0.5 });
        assert_eq!(c[1].methods, vec![SweepMethod::Auto]);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse("[a]\nfamily quad_cos\n", "f.ini").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Syntax {
                path: "f.ini".into(),
                line: 2,
                msg: "expected key = value, got 'family quad_cos'".into()
            }
        );
        assert!(matches!(parse("[a\n", "f").unwrap_err(), ConfigError::Syntax { line: 1, .. }));
        assert!(matches!(parse("[a]\nd=1\nd=2\n", "f").unwrap_err(), ConfigError::Syntax { line: 3, .. }));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = "[a]\nfamily = quad_cos\nd = 3\neps = 1e-2\nn_h = 1\n";
        for extra in
            ["seeds = 1, 1", "scale = 0", "scale = 2", "n_h2 = 1", "method = newton", "repeat = 0", "oracle = magic"]
        {
            let text = format!("{base}{extra}\n");
            assert!(matches!(parse(&text, "f"), Err(ConfigError::Invalid { .. })), "{extra}");
        }
        assert!(parse("[a]\nfamily = nope\nd = 3\neps = 1\nn_h = 1\n", "f").is_err());
        assert!(parse("[a]\nfamily = quad_cos\nd = 3\neps = 1\n", "f").is_err());
        assert!(parse("family = quad_cos\n", "f").is_err());
    }
}
