use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{McmcConfig, McmcError};
use crate::data::SourceType;
use crate::model::{ModelLayout, ModelSpec};

/// Parameter naming scheme shared by chain files, truth files and summaries.
pub mod names {
    use crate::data::SourceType;

    pub const SIGMA_BETA: &str = "sigma_beta";
    pub const RHO: &str = "rho";
    pub const SIGMA_EPS: &str = "sigma_eps";
    pub const MU_XI: &str = "mu_xi";
    pub const SIGMA_XI: &str = "sigma_xi";
    pub const SIGMA_GAMMA: &str = "sigma_gamma";
    pub const MU_PI: &str = "mu_pi";
    pub const SIGMA_PI: &str = "sigma_pi";

    pub fn beta_region(r: &str) -> String {
        format!("beta_region[{r}]")
    }
    pub fn beta(c: &str) -> String {
        format!("beta[{c}]")
    }
    pub fn eta(c: &str, year: i32) -> String {
        format!("eta[{c},{year}]")
    }
    pub fn gamma0(c: &str) -> String {
        format!("gamma0[{c}]")
    }
    /// `k` is 1, 2 or 3.
    pub fn lambda(k: usize, c: &str) -> String {
        format!("lambda{k}[{c}]")
    }
    pub fn xi(c: &str) -> String {
        format!("xi[{c}]")
    }
    pub fn delta(c: &str) -> String {
        format!("delta[{c}]")
    }
    pub fn pi(c: &str) -> String {
        format!("pi[{c}]")
    }
    pub fn mu_lambda(k: usize) -> String {
        format!("mu_lambda{k}")
    }
    pub fn sigma_lambda(k: usize) -> String {
        format!("sigma_lambda{k}")
    }
    pub fn theta(c: &str, year: i32) -> String {
        format!("theta[{c},{year}]")
    }
    pub fn omega(s: SourceType) -> String {
        format!("omega[{}]", s.name())
    }

    /// Splits `eta[CHN,1990]` into `("CHN", 1990)`.
    pub fn parse_eta(name: &str) -> Option<(&str, i32)> {
        let inner = name.strip_prefix("eta[")?.strip_suffix(']')?;
        let (c, y) = inner.split_once(',')?;
        Some((c, y.parse().ok()?))
    }
}

/// Draws of named parameters, stored parameter-major and index-aligned:
/// draw `g` of every parameter comes from the same joint sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DrawSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Vec<f64>>,
}

impl DrawSet {
    pub fn new(names: Vec<String>, values: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), values.len(), "one value column per parameter");
        debug_assert!(values.windows(2).all(|w| w[0].len() == w[1].len()));
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        DrawSet {
            names,
            index,
            values,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of draws.
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.values[i].as_slice())
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Joint draws at the given indices.
    pub fn select(&self, idx: &[usize]) -> DrawSet {
        let values = self
            .values
            .iter()
            .map(|col| idx.iter().map(|&g| col[g]).collect())
            .collect();
        DrawSet {
            names: self.names.clone(),
            index: self.index.clone(),
            values,
        }
    }

    /// `n` joint draws sampled with replacement.
    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DrawSet {
        let len = self.len();
        assert!(len > 0, "cannot resample an empty draw set");
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..len)).collect();
        self.select(&idx)
    }

    /// Concatenates draw sets that share the same parameter names.
    pub fn concat(sets: &[DrawSet]) -> DrawSet {
        let Some(first) = sets.first() else {
            return DrawSet::default();
        };
        let values = (0..first.names.len())
            .map(|p| {
                sets.iter()
                    .flat_map(|s| s.values[p].iter().copied())
                    .collect()
            })
            .collect();
        DrawSet {
            names: first.names.clone(),
            index: first.index.clone(),
            values,
        }
    }
}

/// Kept draws of every chain of one fit, plus what is needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorChains {
    pub spec: ModelSpec,
    pub layout: ModelLayout,
    pub config: McmcConfig,
    pub chains: Vec<DrawSet>,
    /// Post-burn-in acceptance rate of every proposal, per chain.
    pub acceptance: Vec<BTreeMap<String, f64>>,
}

impl PosteriorChains {
    pub fn names(&self) -> &[String] {
        self.chains.first().map_or(&[], |c| c.names())
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, DrawSet::len)
    }

    /// The draws of `name` in every chain.
    pub fn chain_values(&self, name: &str) -> Option<Vec<&[f64]>> {
        self.chains.iter().map(|c| c.get(name)).collect()
    }

    /// All chains concatenated in chain order.
    pub fn pooled(&self) -> DrawSet {
        DrawSet::concat(&self.chains)
    }

    pub fn metadata(&self) -> FitMetadata {
        FitMetadata {
            spec: self.spec.clone(),
            layout: self.layout.clone(),
            config: self.config.clone(),
            acceptance: self.acceptance.clone(),
            psrf: BTreeMap::new(),
            stacking: None,
            version: String::new(),
            config_hash: String::new(),
        }
    }

    pub fn from_parts(meta: &FitMetadata, chains: Vec<DrawSet>) -> Self {
        PosteriorChains {
            spec: meta.spec.clone(),
            layout: meta.layout.clone(),
            config: meta.config.clone(),
            chains,
            acceptance: meta.acceptance.clone(),
        }
    }
}

/// Stacking outcome recorded alongside a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingInfo {
    pub weights: Vec<f64>,
    pub triggered: bool,
    pub unstable_loo_points: usize,
}

/// Run metadata written next to the chain file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub spec: ModelSpec,
    pub layout: ModelLayout,
    pub config: McmcConfig,
    pub acceptance: Vec<BTreeMap<String, f64>>,
    /// Potential scale reduction per parameter; `None` when undefined.
    pub psrf: BTreeMap<String, Option<f64>>,
    pub stacking: Option<StackingInfo>,
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub config_hash: String,
}

pub const CHAINS_HEADER: &str = "chain,iter,param,value";

/// Writes chains as long-format CSV rows `chain,iter,param,value`
/// (chains and iterations counted from 1).
pub fn write_chains_csv<W: Write>(chains: &[DrawSet], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CHAINS_HEADER}")?;
    for (k, c) in chains.iter().enumerate() {
        let quoted: Vec<String> = c
            .names()
            .iter()
            .map(|n| {
                if n.contains(',') {
                    format!("\"{n}\"")
                } else {
                    n.clone()
                }
            })
            .collect();
        for g in 0..c.len() {
            for (p, name) in quoted.iter().enumerate() {
                writeln!(out, "{},{},{},{}", k + 1, g + 1, name, c.values[p][g])?;
            }
        }
    }
    Ok(())
}

/// Reads a chain file; lines starting with `#` are skipped.
pub fn read_chains_csv<R: Read>(input: R) -> Result<Vec<DrawSet>, McmcError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(input);
    let bad = |m: String| McmcError::ChainFile(m);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CHAINS_HEADER.split(',').collect::<Vec<_>>() {
        return Err(bad(format!("expected header `{CHAINS_HEADER}`")));
    }
    // chain -> (names in first-seen order, values per name)
    let mut chains: BTreeMap<usize, (Vec<String>, HashMap<String, usize>, Vec<Vec<f64>>)> =
        BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let k: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad chain index `{}`", &rec[0])))?;
        let value: f64 = rec[3]
            .parse()
            .map_err(|_| bad(format!("bad value `{}`", &rec[3])))?;
        let (names, idx, values) = chains.entry(k).or_default();
        let p = match idx.get(&rec[2]) {
            Some(&p) => p,
            None => {
                idx.insert(rec[2].to_string(), names.len());
                names.push(rec[2].to_string());
                values.push(Vec::new());
                names.len() - 1
            }
        };
        values[p].push(value);
    }
    let sets: Vec<DrawSet> = chains
        .into_values()
        .map(|(names, _, values)| DrawSet::new(names, values))
        .collect();
    if sets
        .iter()
        .any(|s| s.values.windows(2).any(|w| w[0].len() != w[1].len()))
    {
        return Err(bad("ragged chain file".into()));
    }
    Ok(sets)
}

/// Names of the non-sampling error parameters.
pub fn omega_names() -> Vec<(SourceType, String)> {
    SourceType::ALL
        .into_iter()
        .filter(|s| s.has_nonsampling_error())
        .map(|s| (s, names::omega(s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(offset: f64) -> DrawSet {
        DrawSet::new(
            vec!["a".into(), "eta[X,1990]".into()],
            vec![
                vec![offset, offset + 1.0, offset + 2.0],
                vec![0.1, 0.2, 1.0 / 3.0],
            ],
        )
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let chains = vec![set(0.0), set(10.0)];
        let mut buf = b"# sexratio 0.1.0 config=abc\n".to_vec();
        write_chains_csv(&chains, &mut buf).unwrap();
        let back = read_chains_csv(buf.as_slice()).unwrap();
        assert_eq!(back, chains);
    }

    #[test]
    fn resampling_keeps_draws_joint() {
        let s = set(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = s.resample(50, &mut rng);
        assert_eq!(r.len(), 50);
        for g in 0..50 {
            let a = r.get("a").unwrap()[g] as usize;
            assert_eq!(
                r.get("eta[X,1990]").unwrap()[g],
                s.get("eta[X,1990]").unwrap()[a]
            );
        }
    }

    #[test]
    fn eta_names_parse() {
        assert_eq!(
            names::parse_eta(&names::eta("CHN", 1990)),
            Some(("CHN", 1990))
        );
        assert_eq!(names::parse_eta("beta[CHN]"), None);
    }

    #[test]
    fn concat_preserves_order() {
        let c = DrawSet::concat(&[set(0.0), set(10.0)]);
        assert_eq!(c.get("a").unwrap(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
    }
}
