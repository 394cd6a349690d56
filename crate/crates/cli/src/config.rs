use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use proxline::problems::BicycleConfig;

use crate::error::{BenchError, Result};

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "BENCH_SEED";

/// [`DEFAULT_SEED`] unless `BENCH_SEED` is set.
pub fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| BenchError::config(format!("{SEED_ENV}={v:?}: {e}"))),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_SEED),
        Err(e) => Err(BenchError::config(format!("{SEED_ENV}: {e}"))),
    }
}

/// `key = value` lines; `#` starts a comment. Keys are case-sensitive and
/// `-` is read as `_`, so flag names can be used verbatim. Values are
/// consumed with [`KeyValues::take`]; [`KeyValues::finish`] rejects keys
/// nobody asked for.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    origin: Option<PathBuf>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(BenchError::config(format!("line {}: expected key = value, got {raw:?}", i + 1)));
            };
            let key = k.trim().replace('-', "_");
            if key.is_empty() {
                return Err(BenchError::config(format!("line {}: empty key", i + 1)));
            }
            if let Some((first, _)) = entries.insert(key.clone(), (i + 1, v.trim().to_string())) {
                return Err(BenchError::config(format!("line {}: {key} already set on line {first}", i + 1)));
            }
        }
        Ok(Self { entries, origin: None })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
        let mut kv = Self::parse(&text).map_err(|e| BenchError::config(format!("{}: {e}", path.display())))?;
        kv.origin = Some(path.to_path_buf());
        Ok(kv)
    }

    fn label(&self) -> String {
        self.origin.as_ref().map_or_else(|| "config".to_string(), |p| p.display().to_string())
    }

    /// Removes and parses `key`.
    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| BenchError::config(format!("{}: line {line}: {key} = {v:?}: {e}", self.label()))),
        }
    }

    /// The flag value if given, else the config value.
    pub fn pick<T>(&mut self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let from_file = self.take(key)?;
        Ok(flag.or(from_file))
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(BenchError::config(format!("{}: line {line}: unknown key {k:?}", self.label()))),
        }
    }
}

/// Comma-separated list.
pub fn parse_list<T>(text: &str) -> Result<Vec<T>>
where
    T: FromStr,
    T::Err: Display,
{
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| BenchError::config(format!("{s:?}: {e}"))))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(BenchError::config(format!("empty list {text:?}")));
    }
    Ok(items)
}

/// Bicycle fields from a config, starting from the defaults.
pub fn bicycle_config(kv: &mut KeyValues) -> Result<BicycleConfig> {
    let mut c = BicycleConfig::default();
    macro_rules! set {
        ($($key:literal => $field:expr),* $(,)?) => {
            $(if let Some(v) = kv.take($key)? { $field = v; })*
        };
    }
    set! {
        "horizon" => c.horizon,
        "dt" => c.dt,
        "wheelbase" => c.wheelbase,
        "half_width" => c.half_width,
        "curve_amplitude" => c.curve.amplitude,
        "curve_slope" => c.curve.slope,
        "curve_center" => c.curve.center,
        "position_weight" => c.position_weight,
        "terminal_weight" => c.terminal_weight,
        "input_weight" => c.input_weight,
        "accel_bound" => c.accel_bound,
        "steer_bound" => c.steer_bound,
    }
    let shaped = c.curve;
    c.goal = [4.0, shaped.eval(4.0)];
    set! { "goal_x" => c.goal[0] }
    c.goal[1] = shaped.eval(c.goal[0]);
    set! { "goal_y" => c.goal[1] }
    Ok(c)
}
