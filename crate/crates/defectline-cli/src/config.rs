//! Line-oriented `key = value` experiment configuration.
//!
//! Format: one assignment per line, `#` starts a comment, blank lines are
//! ignored. Keys are dotted (`model.p`, `run.seed`). Every subcommand
//! declares the exact key set it accepts; anything else is a hard error with
//! the offending line number, as are duplicates, missing required keys, and
//! out-of-range values.
//!
//! Grid values (`model.p_line_grid`, `pinning.eps`, `probe.delta`) accept
//! three spellings: a single number, a comma list, or an arithmetic
//! progression `start:stop:step` with both endpoints included (so
//! `0.5:0.95:0.05` expands to ten points). Progression points are snapped to
//! a 1e-12 grid to keep the emitted decimals clean.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}` (first assigned on line {first})")]
    Duplicate {
        key: String,
        line: usize,
        first: usize,
    },
    #[error("line {line}: unknown key `{key}` for this subcommand")]
    Unknown { key: String, line: usize },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("line {line}: key `{key}`: {reason}")]
    Invalid {
        key: String,
        line: usize,
        reason: String,
    },
}

/// Raw parse: key -> (value text, line number).
fn parse_raw(text: &str) -> Result<BTreeMap<String, (String, usize)>, ConfigError> {
    let mut map: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Malformed {
                line,
                text: stripped.to_string(),
            });
        }
        if let Some(&(_, first)) = map.get(&key) {
            return Err(ConfigError::Duplicate { key, line, first });
        }
        map.insert(key, (value, line));
    }
    Ok(map)
}

/// Typed extraction over the raw map; consumed keys are removed so that
/// whatever remains at the end is unknown for the active subcommand.
struct Reader {
    entries: BTreeMap<String, (String, usize)>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn parse<T: std::str::FromStr>(
        key: &str,
        value: &str,
        line: usize,
        what: &str,
    ) -> Result<T, ConfigError> {
        value.parse().map_err(|_| ConfigError::Invalid {
            key: key.to_string(),
            line,
            reason: format!("expected {what}, found `{value}`"),
        })
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<(f64, usize)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => Ok(Some((Self::parse(key, &v, line, "a number")?, line))),
        }
    }

    fn u64_opt(&mut self, key: &str) -> Result<Option<(u64, usize)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => Ok(Some((Self::parse(key, &v, line, "an integer")?, line))),
        }
    }

    fn u64_req(&mut self, key: &'static str) -> Result<(u64, usize), ConfigError> {
        self.u64_opt(key)?.ok_or(ConfigError::Missing(key))
    }

    fn u32_opt(&mut self, key: &str) -> Result<Option<(u32, usize)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => Ok(Some((Self::parse(key, &v, line, "an integer")?, line))),
        }
    }

    fn u32_req(&mut self, key: &'static str) -> Result<(u32, usize), ConfigError> {
        self.u32_opt(key)?.ok_or(ConfigError::Missing(key))
    }

    fn f64_req(&mut self, key: &'static str) -> Result<(f64, usize), ConfigError> {
        self.f64_opt(key)?.ok_or(ConfigError::Missing(key))
    }

    /// Comma-separated integer list.
    fn u32_list(&mut self, key: &str) -> Result<Option<(Vec<u32>, usize)>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => {
                let mut out = Vec::new();
                for part in v.split(',') {
                    out.push(Self::parse(key, part.trim(), line, "an integer list")?);
                }
                Ok(Some((out, line)))
            }
        }
    }

    /// Grid value: single number, comma list, or `start:stop:step`.
    fn grid(&mut self, key: &str) -> Result<Option<(Vec<f64>, usize)>, ConfigError> {
        let Some((v, line)) = self.take(key) else {
            return Ok(None);
        };
        let invalid = |reason: String| ConfigError::Invalid {
            key: key.to_string(),
            line,
            reason,
        };
        if v.contains(':') {
            let parts: Vec<&str> = v.split(':').collect();
            if parts.len() != 3 {
                return Err(invalid(format!(
                    "progression must be start:stop:step, found `{v}`"
                )));
            }
            let start: f64 = Self::parse(key, parts[0].trim(), line, "a number")?;
            let stop: f64 = Self::parse(key, parts[1].trim(), line, "a number")?;
            let step: f64 = Self::parse(key, parts[2].trim(), line, "a number")?;
            if !(step > 0.0) || stop < start {
                return Err(invalid(format!(
                    "progression needs step > 0 and stop >= start, found `{v}`"
                )));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            let snap = |x: f64| (x * 1e12).round() / 1e12;
            Ok(Some((
                (0..count).map(|i| snap(start + i as f64 * step)).collect(),
                line,
            )))
        } else if v.contains(',') {
            let mut out = Vec::new();
            for part in v.split(',') {
                out.push(Self::parse(key, part.trim(), line, "a number list")?);
            }
            Ok(Some((out, line)))
        } else {
            Ok(Some((vec![Self::parse(key, &v, line, "a number")?], line)))
        }
    }

    /// Everything left over is unknown; report the first (lexicographically)
    /// with its line number.
    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (_, line))) => Err(ConfigError::Unknown { key, line }),
        }
    }
}

fn check_range(
    key: &str,
    line: usize,
    value: f64,
    lo: f64,
    hi: f64,
    hi_open: bool,
) -> Result<(), ConfigError> {
    let ok = value.is_finite()
        && value >= lo
        && if hi_open { value < hi } else { value <= hi };
    if ok {
        Ok(())
    } else {
        let bracket = if hi_open { ")" } else { "]" };
        Err(ConfigError::Invalid {
            key: key.to_string(),
            line,
            reason: format!("value {value} outside [{lo}, {hi}{bracket}"),
        })
    }
}

// ---------------------------------------------------------------------------
// Resolved configuration (serialized verbatim into every output header).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ModelBlock {
    pub d: u32,
    pub p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_line: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_line_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryBlock {
    pub n: Vec<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<u32>,
}

/// Budget and seeding. The worker count is deliberately excluded: results
/// never depend on it (integer tallies merge exactly), and keeping it out of
/// the header makes output files byte-identical across thread counts.
#[derive(Debug, Clone, Serialize)]
pub struct RunBlock {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_attempts: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PinningBlock {
    pub d: u32,
    pub eps: Vec<f64>,
    pub nmax: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeBlock {
    pub delta: Vec<f64>,
    pub n: u64,
    pub replicas: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewalBlock {
    pub kernels: Vec<String>,
    pub horizon: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub subcommand: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryBlock>,
    pub run: RunBlock,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pinning: Option<PinningBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub renewal: Option<RenewalBlock>,
}

/// Which probability columns a lattice subcommand needs.
#[derive(Clone, Copy, PartialEq)]
enum LineMode {
    /// Exactly one of `model.p_line` / `model.p_line_grid`.
    SingleOrGrid,
    /// `model.p_line_grid` required.
    GridOnly,
    /// `model.p_line` required.
    SingleOnly,
}

fn model_block(r: &mut Reader, spec: LineMode) -> Result<ModelBlock, ConfigError> {
    let (d, d_line) = r.u32_req("model.d")?;
    if !(2..=6).contains(&d) {
        return Err(ConfigError::Invalid {
            key: "model.d".into(),
            line: d_line,
            reason: format!("lattice dimension {d} outside [2, 6]"),
        });
    }
    let (p, p_line_no) = r.f64_req("model.p")?;
    check_range("model.p", p_line_no, p, 0.0, 1.0, true)?;
    let single = r.f64_opt("model.p_line")?;
    let grid = r.grid("model.p_line_grid")?;
    if let Some((v, line)) = single {
        check_range("model.p_line", line, v, 0.0, 1.0, false)?;
    }
    if let Some((ref vs, line)) = grid {
        if vs.is_empty() {
            return Err(ConfigError::Invalid {
                key: "model.p_line_grid".into(),
                line,
                reason: "empty grid".into(),
            });
        }
        for &v in vs {
            check_range("model.p_line_grid", line, v, 0.0, 1.0, false)?;
        }
    }
    let (p_line, p_line_grid) = match (single, grid, spec) {
        (Some((v, _)), None, LineMode::SingleOrGrid | LineMode::SingleOnly) => (Some(v), None),
        (None, Some((vs, _)), LineMode::SingleOrGrid | LineMode::GridOnly) => (None, Some(vs)),
        (None, None, LineMode::SingleOnly) => return Err(ConfigError::Missing("model.p_line")),
        (None, None, _) => return Err(ConfigError::Missing("model.p_line_grid")),
        (Some(_), Some((_, line)), _) => {
            return Err(ConfigError::Invalid {
                key: "model.p_line_grid".into(),
                line,
                reason: "both model.p_line and model.p_line_grid given; pick one".into(),
            })
        }
        (Some((_, line)), None, LineMode::GridOnly) => {
            return Err(ConfigError::Invalid {
                key: "model.p_line".into(),
                line,
                reason: "this subcommand scans a grid; use model.p_line_grid".into(),
            })
        }
        (None, Some((_, line)), LineMode::SingleOnly) => {
            return Err(ConfigError::Invalid {
                key: "model.p_line_grid".into(),
                line,
                reason: "this subcommand takes a single model.p_line".into(),
            })
        }
    };
    Ok(ModelBlock {
        d,
        p,
        p_line,
        p_line_grid,
    })
}

fn geometry_block(r: &mut Reader) -> Result<GeometryBlock, ConfigError> {
    let (n, line) = r
        .u32_list("geometry.n")?
        .ok_or(ConfigError::Missing("geometry.n"))?;
    if n.is_empty() || n.contains(&0) {
        return Err(ConfigError::Invalid {
            key: "geometry.n".into(),
            line,
            reason: "need a nonempty list of positive lengths".into(),
        });
    }
    let half_width = r.u32_opt("geometry.half_width")?.map(|(w, _)| w);
    Ok(GeometryBlock { n, half_width })
}

fn seed(r: &mut Reader, flag: Option<u64>) -> Result<u64, ConfigError> {
    // An explicit seed is mandatory: either the --seed flag or run.seed.
    // There is no wall-clock fallback.
    let from_config = r.u64_opt("run.seed")?;
    match flag {
        Some(s) => Ok(s),
        None => from_config
            .map(|(s, _)| s)
            .ok_or(ConfigError::Missing("run.seed")),
    }
}

pub fn load(
    subcommand: &'static str,
    text: &str,
    seed_flag: Option<u64>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut r = Reader {
        entries: parse_raw(text)?,
    };
    let mut cfg = ExperimentConfig {
        subcommand,
        model: None,
        geometry: None,
        run: RunBlock {
            seed: 0,
            replicas: None,
            samples: None,
            max_attempts: None,
        },
        pinning: None,
        probe: None,
        renewal: None,
    };
    match subcommand {
        "connectivity" => {
            cfg.model = Some(model_block(&mut r, LineMode::SingleOrGrid)?);
            cfg.geometry = Some(geometry_block(&mut r)?);
            cfg.run.replicas = Some(positive_u64(&mut r, "run.replicas")?);
        }
        "xi-scan" | "gap-curve" => {
            cfg.model = Some(model_block(&mut r, LineMode::GridOnly)?);
            cfg.geometry = Some(geometry_block(&mut r)?);
            cfg.run.replicas = Some(positive_u64(&mut r, "run.replicas")?);
        }
        "prefactor" => {
            cfg.model = Some(model_block(&mut r, LineMode::SingleOnly)?);
            cfg.geometry = Some(geometry_block(&mut r)?);
            cfg.run.replicas = Some(positive_u64(&mut r, "run.replicas")?);
        }
        "geometry" => {
            cfg.model = Some(model_block(&mut r, LineMode::SingleOnly)?);
            cfg.geometry = Some(geometry_block(&mut r)?);
            let samples = positive_u64(&mut r, "run.samples")?;
            cfg.run.samples = Some(samples);
            // Rejection budget: by default supports acceptance rates down
            // to roughly 1e-5.
            cfg.run.max_attempts = Some(
                r.u64_opt("run.max_attempts")?
                    .map(|(v, _)| v)
                    .unwrap_or_else(|| samples.saturating_mul(100_000)),
            );
        }
        "pinning" => {
            let (d, d_line) = r.u32_req("pinning.d")?;
            if d != 1 && d != 2 {
                return Err(ConfigError::Invalid {
                    key: "pinning.d".into(),
                    line: d_line,
                    reason: format!("walk dimension {d} must be 1 or 2"),
                });
            }
            let (eps, eps_line) = r
                .grid("pinning.eps")?
                .ok_or(ConfigError::Missing("pinning.eps"))?;
            for &e in &eps {
                if !e.is_finite() || e < 0.0 {
                    return Err(ConfigError::Invalid {
                        key: "pinning.eps".into(),
                        line: eps_line,
                        reason: format!("pinning strength {e} must be >= 0"),
                    });
                }
            }
            let nmax = r.u64_opt("pinning.nmax")?.map(|(v, _)| v).unwrap_or(1_000_000);
            cfg.pinning = Some(PinningBlock { d, eps, nmax });
            if let Some((delta, delta_line)) = r.grid("probe.delta")? {
                for &dl in &delta {
                    if !(dl >= 0.0 && dl < 1.0) {
                        return Err(ConfigError::Invalid {
                            key: "probe.delta".into(),
                            line: delta_line,
                            reason: format!("local-time fraction {dl} outside [0, 1)"),
                        });
                    }
                }
                let n = positive_u64(&mut r, "probe.n")?;
                let replicas = positive_u64(&mut r, "probe.replicas")?;
                cfg.probe = Some(ProbeBlock { delta, n, replicas });
            }
        }
        "renewal-demo" => {
            let kernels = match r.take("renewal.kernel") {
                None => vec!["geometric".to_string(), "cubic".to_string()],
                Some((v, line)) => {
                    let names: Vec<String> =
                        v.split(',').map(|s| s.trim().to_string()).collect();
                    for name in &names {
                        if name != "geometric" && name != "cubic" {
                            return Err(ConfigError::Invalid {
                                key: "renewal.kernel".into(),
                                line,
                                reason: format!(
                                    "unknown kernel `{name}` (choices: geometric, cubic)"
                                ),
                            });
                        }
                    }
                    names
                }
            };
            let horizon = r.u64_opt("renewal.horizon")?.map(|(v, _)| v).unwrap_or(100_000);
            cfg.renewal = Some(RenewalBlock { kernels, horizon });
        }
        other => unreachable!("unhandled subcommand {other}"),
    }
    cfg.run.seed = seed(&mut r, seed_flag)?;
    r.finish()?;
    Ok(cfg)
}

fn positive_u64(r: &mut Reader, key: &'static str) -> Result<u64, ConfigError> {
    let (v, line) = r.u64_req(key)?;
    if v == 0 {
        return Err(ConfigError::Invalid {
            key: key.to_string(),
            line,
            reason: "must be positive".into(),
        });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "model.d = 2\nmodel.p = 0.45\nmodel.p_line = 0.9\n\
        geometry.n = 8,12,16\nrun.replicas = 1000\nrun.seed = 7\n";

    #[test]
    fn minimal_config_parses() {
        let cfg = load("connectivity", BASE, None).unwrap();
        let model = cfg.model.unwrap();
        assert_eq!(model.d, 2);
        assert_eq!(model.p, 0.45);
        assert_eq!(model.p_line, Some(0.9));
        assert_eq!(cfg.geometry.unwrap().n, vec![8, 12, 16]);
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.run.replicas, Some(1000));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# header comment\n\n{BASE}geometry.half_width = 6 # trailing\n");
        let cfg = load("connectivity", &text, None).unwrap();
        assert_eq!(cfg.geometry.unwrap().half_width, Some(6));
    }

    #[test]
    fn out_of_range_probability_names_key_and_line() {
        let text = "model.d = 2\nmodel.p = 1.5\nmodel.p_line = 0.9\n\
            geometry.n = 4\nrun.replicas = 10\nrun.seed = 1\n";
        let err = load("connectivity", text, None).unwrap_err();
        match err {
            ConfigError::Invalid { key, line, .. } => {
                assert_eq!(key, "model.p");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_unknown_keys_are_rejected_with_lines() {
        let dup = format!("{BASE}model.p = 0.3\n");
        assert!(matches!(
            load("connectivity", &dup, None).unwrap_err(),
            ConfigError::Duplicate { line: 7, first: 2, .. }
        ));
        let unk = format!("{BASE}model.q = 0.3\n");
        assert!(matches!(
            load("connectivity", &unk, None).unwrap_err(),
            ConfigError::Unknown { line: 7, .. }
        ));
    }

    #[test]
    fn grid_progression_expands_inclusively() {
        let text = "model.d = 2\nmodel.p = 0.45\nmodel.p_line_grid = 0.5:0.95:0.05\n\
            geometry.n = 8\nrun.replicas = 10\nrun.seed = 1\n";
        let cfg = load("connectivity", text, None).unwrap();
        let grid = cfg.model.unwrap().p_line_grid.unwrap();
        assert_eq!(grid.len(), 10);
        assert_eq!(grid[0], 0.5);
        assert_eq!(grid[9], 0.95);
        assert_eq!(grid[7], 0.85);
    }

    #[test]
    fn seed_is_mandatory_and_flag_overrides() {
        let text = BASE.replace("run.seed = 7\n", "");
        assert_eq!(
            load("connectivity", &text, None).unwrap_err(),
            ConfigError::Missing("run.seed")
        );
        assert_eq!(load("connectivity", &text, Some(11)).unwrap().run.seed, 11);
        assert_eq!(load("connectivity", BASE, Some(11)).unwrap().run.seed, 11);
    }

    #[test]
    fn scan_commands_demand_a_grid() {
        assert!(matches!(
            load("xi-scan", BASE, None).unwrap_err(),
            ConfigError::Invalid { .. }
        ));
        let text = BASE.replace("model.p_line = 0.9", "model.p_line_grid = 0.5,0.7,0.9");
        let cfg = load("xi-scan", &text, None).unwrap();
        assert_eq!(cfg.model.unwrap().p_line_grid.unwrap().len(), 3);
    }

    #[test]
    fn pinning_schema_rejects_lattice_keys() {
        let text = "pinning.d = 1\npinning.eps = 0.5,1.0\nrun.seed = 3\nmodel.p = 0.4\n";
        assert!(matches!(
            load("pinning", text, None).unwrap_err(),
            ConfigError::Unknown { line: 4, .. }
        ));
        let ok = "pinning.d = 1\npinning.eps = 0.5,1.0\nrun.seed = 3\n";
        let cfg = load("pinning", ok, None).unwrap();
        let pin = cfg.pinning.unwrap();
        assert_eq!(pin.nmax, 1_000_000);
        assert_eq!(pin.eps, vec![0.5, 1.0]);
    }
}
