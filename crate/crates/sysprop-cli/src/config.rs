//! Experiment configuration: flat `key = value` lines under `[section]`
//! headers. Unknown sections or keys are rejected before any computation.
//!
//! Sections: `[plant]` (same keys as a plant file, or `file = <path>`
//! relative to the config), `[noise]`, `[estimator]`, `[output]`, and
//! `[compare]` for the compare subcommand. See the README for the full
//! schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sysprop::config::InitialInput;
use sysprop::plantfile::{parse_plant_text, PlantSpec};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Gain,
    Passivity,
    Cone,
    All,
}

impl Property {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gain" => Ok(Self::Gain),
            "passivity" => Ok(Self::Passivity),
            "cone" => Ok(Self::Cone),
            "all" => Ok(Self::All),
            other => err(format!(
                "property must be gain|passivity|cone|all, got `{other}`"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKindSpec {
    None,
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    pub kind: NoiseKindSpec,
    pub sigma: f64,
    pub epsilon_bar: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub property: Property,
    pub method: Option<String>,
    pub alpha: f64,
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub budget: Option<u64>,
    pub seed: u64,
    pub u0: InitialInput,
    pub flow_time: f64,
    pub with_nu: bool,
}

#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub property: Property,
    pub methods: Vec<String>,
    pub budgets: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub noise: NoiseSpec,
    pub estimator: EstimatorSpec,
    pub out_dir: Option<String>,
    pub validate: bool,
    pub compare: Option<CompareSpec>,
    /// Canonical `section.key = value` echo for the meta file.
    pub resolved: Vec<(String, String)>,
}

struct Sections {
    // section -> key -> (value, used)
    map: BTreeMap<String, BTreeMap<String, (String, bool)>>,
}

impl Sections {
    fn parse(text: &str) -> Result<Self> {
        let mut map: BTreeMap<String, BTreeMap<String, (String, bool)>> = BTreeMap::new();
        let mut current = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return err(format!("line {}: malformed section header", i + 1));
                }
                current = line[1..line.len() - 1].trim().to_string();
                map.entry(current.clone()).or_default();
                continue;
            }
            if current.is_empty() {
                return err(format!("line {}: key outside of any [section]", i + 1));
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", i + 1));
            };
            let k = k.trim().to_string();
            let section = map.entry(current.clone()).or_default();
            if section
                .insert(k.clone(), (v.trim().to_string(), false))
                .is_some()
            {
                return err(format!("duplicate key `{k}` in section [{current}]"));
            }
        }
        Ok(Self { map })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.map
            .get_mut(section)
            .and_then(|s| s.get_mut(key))
            .map(|(v, used)| {
                *used = true;
                v.clone()
            })
    }

    fn require(&mut self, section: &str, key: &str) -> Result<String> {
        self.take(section, key)
            .ok_or_else(|| ConfigError(format!("missing key `{key}` in section [{section}]")))
    }

    fn check_consumed(&self, allowed_sections: &[&str]) -> Result<()> {
        for (section, keys) in &self.map {
            if !allowed_sections.contains(&section.as_str()) {
                return err(format!("unknown section [{section}]"));
            }
            for (key, (_, used)) in keys {
                if !used {
                    return err(format!("unknown key `{key}` in section [{section}]"));
                }
            }
        }
        Ok(())
    }

    fn resolved(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (section, keys) in &self.map {
            for (key, (value, _)) in keys {
                out.push((format!("{section}.{key}"), value.clone()));
            }
        }
        out
    }
}

fn parse_f64(v: &str, what: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| ConfigError(format!("{what}: cannot parse `{v}` as a real")))
}

fn parse_u64(v: &str, what: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| ConfigError(format!("{what}: cannot parse `{v}` as an integer")))
}

const GAIN_METHODS: &[&str] = &[
    "power",
    "pg_power",
    "gradient_ascent",
    "gradient_ascent_linesearch",
    "continuous_flow",
];
const PASSIVITY_METHODS: &[&str] = &[
    "gradient_descent",
    "gradient_descent_linesearch",
    "continuous_flow",
];
const CONE_METHODS: &[&str] = &["arrow_hurwicz", "uzawa", "continuous_flow"];

pub fn methods_for(property: Property) -> &'static [&'static str] {
    match property {
        Property::Gain => GAIN_METHODS,
        Property::Passivity => PASSIVITY_METHODS,
        Property::Cone => CONE_METHODS,
        Property::All => &[],
    }
}

/// Parses and schema-checks an experiment config. `config_dir` resolves a
/// `[plant] file = ...` reference; `for_compare` demands (or forbids) the
/// `[compare]` section.
pub fn parse_config(text: &str, config_dir: &Path, for_compare: bool) -> Result<ExperimentConfig> {
    let mut s = Sections::parse(text)?;
    let resolved = s.resolved();

    if s.map.get("plant").is_none() {
        return err("missing [plant] section");
    }

    // [plant]: either file = path, or inline plant-file keys
    let plant = if let Some(file) = s.take("plant", "file") {
        let path = config_dir.join(&file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ConfigError(format!("cannot read plant file {}: {e}", path.display())))?;
        // consume nothing else from [plant]
        for (_k, v) in s.map.get_mut("plant").unwrap().iter_mut() {
            v.1 = true;
        }
        parse_plant_text(&text).map_err(|e| ConfigError(e.to_string()))?
    } else {
        let keys: Vec<String> = s.map.get("plant").unwrap().keys().cloned().collect();
        let mut text = String::new();
        for k in keys {
            let v = s.take("plant", &k).unwrap();
            text.push_str(&format!("{k} = {v}\n"));
        }
        parse_plant_text(&text).map_err(|e| ConfigError(e.to_string()))?
    };

    // [estimator]; compare configs may omit it (the [compare] section
    // carries the property and the defaults apply)
    let property = match s.take("estimator", "property") {
        Some(p) => Property::parse(&p)?,
        None if for_compare => Property::Gain,
        None => return err("missing key `property` in section [estimator]"),
    };
    let method = s.take("estimator", "method");
    if let Some(ref m) = method {
        if property == Property::All {
            return err(
                "method cannot be combined with property = all (per-property defaults apply)",
            );
        }
        if !methods_for(property).contains(&m.as_str()) {
            return err(format!(
                "method `{m}` is not valid for this property (expected one of {})",
                methods_for(property).join("|")
            ));
        }
    }
    let alpha = match s.take("estimator", "alpha") {
        Some(v) => parse_f64(&v, "alpha")?,
        None => match property {
            Property::Cone => 0.002,
            _ => 0.01,
        },
    };
    if !(alpha > 0.0) {
        return err("alpha must be positive");
    }
    let rel_tol = match s.take("estimator", "rel_tol") {
        Some(v) => parse_f64(&v, "rel_tol")?,
        None => 1e-6,
    };
    let grad_tol = match s.take("estimator", "grad_tol") {
        Some(v) => parse_f64(&v, "grad_tol")?,
        None => 1e-8,
    };
    let patience = match s.take("estimator", "patience") {
        Some(v) => parse_u64(&v, "patience")? as usize,
        None => 3,
    };
    let max_iters = match s.take("estimator", "max_iters") {
        Some(v) => parse_u64(&v, "max_iters")? as usize,
        None => 100_000,
    };
    let budget = match s.take("estimator", "budget") {
        Some(v) => {
            let b = parse_u64(&v, "budget")?;
            if b == 0 {
                return err("budget must be positive");
            }
            Some(b)
        }
        None => Some(10_000),
    };
    let seed = match s.take("estimator", "seed") {
        Some(v) => parse_u64(&v, "seed")?,
        None => 0,
    };
    let u0 = match s.take("estimator", "u0").as_deref() {
        None => match property {
            Property::Passivity => InitialInput::Ones,
            _ => InitialInput::Sine,
        },
        Some("sine") => InitialInput::Sine,
        Some("ones") => InitialInput::Ones,
        Some("sine_offset") => InitialInput::SineOffset,
        Some(other) => return err(format!("u0 must be sine|ones|sine_offset, got `{other}`")),
    };
    let flow_time = match s.take("estimator", "flow_time") {
        Some(v) => parse_f64(&v, "flow_time")?,
        None => 50.0,
    };
    let with_nu = match s.take("estimator", "with_nu").as_deref() {
        None => false,
        Some("true") => true,
        Some("false") => false,
        Some(other) => return err(format!("with_nu must be true|false, got `{other}`")),
    };

    // [noise] (optional)
    let noise = {
        let kind = match s.take("noise", "kind").as_deref() {
            None | Some("none") => NoiseKindSpec::None,
            Some("additive") => NoiseKindSpec::Additive,
            Some("multiplicative") => NoiseKindSpec::Multiplicative,
            Some(other) => {
                return err(format!(
                    "noise kind must be none|additive|multiplicative, got `{other}`"
                ))
            }
        };
        let sigma = match s.take("noise", "sigma") {
            Some(v) => parse_f64(&v, "sigma")?,
            None => 0.0,
        };
        let epsilon_bar = match s.take("noise", "epsilon_bar") {
            Some(v) => parse_f64(&v, "epsilon_bar")?,
            None => 0.0,
        };
        if kind != NoiseKindSpec::Additive && sigma != 0.0 {
            return err("sigma applies only to additive noise");
        }
        if kind != NoiseKindSpec::Multiplicative && epsilon_bar != 0.0 {
            return err("epsilon_bar applies only to multiplicative noise");
        }
        let nseed = s
            .take("noise", "seed")
            .map(|v| parse_u64(&v, "noise seed"))
            .transpose()?;
        NoiseSpec {
            kind,
            sigma,
            epsilon_bar,
            seed: nseed,
        }
    };

    // [output]
    let out_dir = s.take("output", "dir");
    let validate = match s.take("output", "validate").as_deref() {
        None => false,
        Some("true") => true,
        Some("false") => false,
        Some(other) => return err(format!("validate must be true|false, got `{other}`")),
    };

    // [compare]
    let compare = if for_compare {
        let property = Property::parse(&s.require("compare", "property")?)?;
        if property == Property::All {
            return err("compare needs a single property");
        }
        let methods: Vec<String> = s
            .require("compare", "methods")?
            .split(',')
            .map(|m| m.trim().to_string())
            .filter(|m| !m.is_empty())
            .collect();
        if methods.len() < 2 {
            return err("compare needs at least 2 methods");
        }
        for m in &methods {
            if !methods_for(property).contains(&m.as_str()) {
                return err(format!(
                    "method `{m}` is not valid for the compared property"
                ));
            }
        }
        let budgets: Vec<u64> = s
            .require("compare", "budgets")?
            .split(',')
            .map(|b| parse_u64(b.trim(), "budget"))
            .collect::<Result<Vec<_>>>()?;
        if budgets.is_empty() {
            return err("compare needs a nonempty budget grid");
        }
        if budgets.iter().any(|&b| b == 0) {
            return err("compare budgets must be positive");
        }
        Some(CompareSpec {
            property,
            methods,
            budgets,
        })
    } else {
        if s.map.contains_key("compare") {
            return err("[compare] section is only valid for the compare subcommand");
        }
        None
    };

    let allowed: &[&str] = if for_compare {
        &["plant", "noise", "estimator", "output", "compare"]
    } else {
        &["plant", "noise", "estimator", "output"]
    };
    s.check_consumed(allowed)?;

    Ok(ExperimentConfig {
        plant,
        noise,
        estimator: EstimatorSpec {
            property,
            method,
            alpha,
            rel_tol,
            grad_tol,
            patience,
            max_iters,
            budget,
            seed,
            u0,
            flow_time,
            with_nu,
        },
        out_dir,
        validate,
        compare,
        resolved,
    })
}

/// Output directory precedence: --out flag, then [output] dir, then the
/// SYSPROP_OUT environment variable, then ./out.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg_dir: Option<&str>) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    if let Some(d) = cfg_dir {
        return PathBuf::from(d);
    }
    if let Ok(env) = std::env::var("SYSPROP_OUT") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("out")
}
