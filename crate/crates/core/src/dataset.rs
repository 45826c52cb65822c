//! Theory-driven SFT dataset synthesis.
//!
//! For every cell of an attribute grid the optimal path is solved, a wealth
//! path is simulated under it with the cell's own noise, and the resulting
//! invested fractions are rendered into a prompt/response pair. Records are
//! written one JSON object per line in canonical grid order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elicitation::{p_from_alpha, reliance_from_theta, DEFAULT_RISKY_PAYOFF, DEFAULT_SURE_PAYOFF};
use crate::error::{Error, Result};
use crate::market::{proportions, simulate_wealth, MarketParams, ProportionPath};
use crate::percent::{format_percent, format_percent_list, parse_percent};
use crate::rng;
use crate::solver::{merton_path, optimal_path_with_eta, SolverConfig};
use crate::template::TemplateSet;

pub const DEFAULT_ADVISOR_ALPHA: f64 = 0.2;
/// Seed of the advisor's recommendation list when none is configured.
pub const DEFAULT_REFER_SEED: u64 = 0x5EED_A55E;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for GridSpec {
    /// alpha in {0.05, ..., 0.50}, theta in {1e-8, ..., 1e-7}, ten trials.
    fn default() -> Self {
        GridSpec {
            alphas: (1..=10).map(|i| f64::from(5 * i) / 100.0).collect(),
            thetas: (1..=10).map(|k| f64::from(k) / 1e8).collect(),
            trials: 10,
            base_seed: 0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.thetas.is_empty() {
            return Err(Error::invalid("grid needs at least one alpha and one theta"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if let Some(a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!("alpha {a} must be > 0")));
        }
        if let Some(t) = self.thetas.iter().find(|&&t| !(t >= 0.0 && t.is_finite())) {
            return Err(Error::invalid(format!("theta {t} must be >= 0")));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.alphas.len() * self.thetas.len() * self.trials
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub alpha: f64,
    pub theta: f64,
    pub alpha_index: usize,
    pub theta_index: usize,
    pub trial_index: usize,
    pub trial_seed: u64,
}

/// Alpha-major, then theta, then trial.
pub fn build_grid(spec: &GridSpec) -> Result<Vec<GridCell>> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.cell_count());
    for (ai, &alpha) in spec.alphas.iter().enumerate() {
        for (ti, &theta) in spec.thetas.iter().enumerate() {
            for trial in 0..spec.trials {
                cells.push(GridCell {
                    alpha,
                    theta,
                    alpha_index: ai,
                    theta_index: ti,
                    trial_index: trial,
                    trial_seed: rng::derive_seed(
                        spec.base_seed,
                        &[ai as u64, ti as u64, trial as u64],
                    ),
                });
            }
        }
    }
    Ok(cells)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "P3_SFT")]
    P3Sft,
    #[serde(rename = "P3_INFER")]
    P3Infer,
    #[serde(rename = "P1_INFER")]
    P1Infer,
    #[serde(rename = "P2_INFER")]
    P2Infer,
}

impl TemplateId {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::P3Sft => "P3_SFT",
            TemplateId::P3Infer => "P3_INFER",
            TemplateId::P1Infer => "P1_INFER",
            TemplateId::P2Infer => "P2_INFER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "P3_SFT" => Some(TemplateId::P3Sft),
            "P3_INFER" => Some(TemplateId::P3Infer),
            "P1_INFER" => Some(TemplateId::P1Infer),
            "P2_INFER" => Some(TemplateId::P2Infer),
            _ => None,
        }
    }
}

/// Invested fractions of the advisor following its Merton amounts along a
/// wealth path drawn from `seed`.
pub fn refer_ratios(params: &MarketParams, alpha2: f64, seed: u64) -> Result<ProportionPath> {
    let plan = merton_path(params, alpha2);
    let wealth = simulate_wealth(params, &plan, &params.noise(seed)?)?;
    proportions(&plan, &wealth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferSource {
    Simulated { seed: u64 },
    /// Percent values used verbatim.
    Literal(Vec<f64>),
}

impl Default for ReferSource {
    fn default() -> Self {
        ReferSource::Simulated {
            seed: DEFAULT_REFER_SEED,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub params: MarketParams,
    pub solver: SolverConfig,
    pub alpha2: f64,
    pub refer: ReferSource,
    pub templates: TemplateSet,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            params: MarketParams::default(),
            solver: SolverConfig::default(),
            alpha2: DEFAULT_ADVISOR_ALPHA,
            refer: ReferSource::default(),
            templates: TemplateSet::default(),
        }
    }
}

/// Everything shared by the records of one dataset.
#[derive(Clone, Debug)]
pub struct Generator {
    config: DatasetConfig,
    refer_rendered: Vec<String>,
}

impl Generator {
    pub fn new(config: DatasetConfig) -> Result<Self> {
        config.params.validate()?;
        config.solver.validate()?;
        let pcts = match &config.refer {
            ReferSource::Simulated { seed } => {
                refer_ratios(&config.params, config.alpha2, *seed)?.percents()
            }
            ReferSource::Literal(v) => {
                if v.len() != config.params.decision_count() {
                    return Err(Error::invalid(format!(
                        "{} literal refer ratios for {} decision times",
                        v.len(),
                        config.params.decision_count()
                    )));
                }
                v.clone()
            }
        };
        let refer_rendered = pcts.iter().map(|&p| format_percent(p)).collect();
        Ok(Generator {
            config,
            refer_rendered,
        })
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn refer_rendered(&self) -> &[String] {
        &self.refer_rendered
    }

    fn refer_list(&self) -> String {
        let items: Vec<String> = self
            .refer_rendered
            .iter()
            .map(|s| format!("\"{s}\""))
            .collect();
        format!("[{}]", items.join(", "))
    }

    pub fn generate_record(
        &self,
        alpha: f64,
        theta: f64,
        trial_seed: u64,
        template: TemplateId,
    ) -> Result<SftRecord> {
        let cfg = &self.config;
        let params = &cfg.params;
        let (plan, sol) =
            optimal_path_with_eta(params, alpha, cfg.alpha2, theta, &cfg.solver)?;
        let wealth = simulate_wealth(params, &plan, &params.noise(trial_seed)?)?;
        let props = proportions(&plan, &wealth)?;
        let pcts = props.percents();

        let p = p_from_alpha(alpha, DEFAULT_RISKY_PAYOFF, DEFAULT_SURE_PAYOFF);
        let p_binding = format_percent(100.0 * p);
        let k_binding = reliance_from_theta(theta)?.get();
        let optimal_ratios = format_percent_list(&pcts);

        let mut b: BTreeMap<&str, String> = BTreeMap::new();
        b.insert("alpha", render_alpha(alpha));
        b.insert("p", p_binding.clone());
        b.insert("theta", render_theta(theta));
        b.insert("k", k_binding.to_string());
        b.insert("refer_ratios", self.refer_list());
        b.insert("alpha2", render_alpha(cfg.alpha2));
        b.insert("eta", render_eta(sol.eta));
        b.insert("optimal_ratios", optimal_ratios);

        let t = &cfg.templates;
        let (prompt, response) = match template {
            TemplateId::P3Sft => (t.p3_prompt.render(&b)?, t.p3_sft_response.render(&b)?),
            TemplateId::P3Infer => (t.p3_prompt.render(&b)?, String::new()),
            TemplateId::P1Infer => {
                b.insert("initial_decision", format_percent(pcts[0]));
                (t.p1_prompt.render(&b)?, String::new())
            }
            TemplateId::P2Infer => {
                let p2 = p_from_alpha(cfg.alpha2, DEFAULT_RISKY_PAYOFF, DEFAULT_SURE_PAYOFF);
                b.insert("alpha1", render_alpha(alpha));
                b.insert("p1", p_binding.clone());
                b.insert("theta1", render_theta(theta));
                b.insert("k1", k_binding.to_string());
                b.insert("p2", format_percent(100.0 * p2));
                b.insert("theta2", render_theta(theta));
                b.insert("k2", k_binding.to_string());
                (t.p2_prompt.render(&b)?, String::new())
            }
        };

        Ok(SftRecord {
            prompt,
            response,
            meta: RecordMeta {
                alpha,
                theta,
                eta: sol.eta,
                trial_seed,
                template_id: template,
                proportions: pcts,
                amounts: plan.amounts,
                wealth: wealth.funds,
                alpha2: cfg.alpha2,
                p_binding,
                k_binding,
                refer_ratios: self.refer_rendered.clone(),
            },
        })
    }

    /// Rebuilds a record from its metadata alone (plus this generator's
    /// market, solver, and templates).
    pub fn regenerate(&self, meta: &RecordMeta) -> Result<SftRecord> {
        let literal = meta
            .refer_ratios
            .iter()
            .map(|s| {
                parse_percent(s)
                    .ok_or_else(|| Error::invalid(format!("unparseable refer ratio {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut config = self.config.clone();
        config.alpha2 = meta.alpha2;
        config.refer = ReferSource::Literal(literal);
        Generator::new(config)?.generate_record(
            meta.alpha,
            meta.theta,
            meta.trial_seed,
            meta.template_id,
        )
    }

    pub fn generate_all(
        &self,
        spec: &GridSpec,
        template: TemplateId,
        parallel: bool,
    ) -> Result<Vec<SftRecord>> {
        let cells = build_grid(spec)?;
        let make = |c: &GridCell| self.generate_record(c.alpha, c.theta, c.trial_seed, template);
        if parallel {
            cells.par_iter().map(make).collect()
        } else {
            cells.iter().map(make).collect()
        }
    }
}

pub fn render_alpha(alpha: f64) -> String {
    format!("{alpha}")
}

pub fn render_theta(theta: f64) -> String {
    format!("{theta:e}")
}

pub fn render_eta(eta: f64) -> String {
    format!("{eta:.6e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub alpha: f64,
    pub theta: f64,
    pub eta: f64,
    pub trial_seed: u64,
    pub template_id: TemplateId,
    /// Unrounded percents.
    pub proportions: Vec<f64>,
    pub amounts: Vec<f64>,
    pub wealth: Vec<f64>,
    pub alpha2: f64,
    pub p_binding: String,
    pub k_binding: u32,
    pub refer_ratios: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub response: String,
    pub meta: RecordMeta,
}

impl SftRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<usize> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for line in lines {
        w.write_all(line.as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

/// Writes one record per grid cell and returns the count.
pub fn generate_dataset(
    generator: &Generator,
    spec: &GridSpec,
    template: TemplateId,
    out_path: &Path,
    parallel: bool,
) -> Result<usize> {
    let records = generator.generate_all(spec, template, parallel)?;
    write_lines(out_path, records.iter().map(SftRecord::to_line))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<SftRecord>> {
    read_lines(path)?
        .iter()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Row {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Lines of a record file that carry string `prompt` and `response` fields.
fn read_generic_records(path: &Path) -> Result<Vec<String>> {
    let lines = read_lines(path)?;
    for (i, line) in lines.iter().enumerate() {
        let row_err = |message: String| Error::Row {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message,
        };
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| row_err(e.to_string()))?;
        for key in ["prompt", "response"] {
            if !v.get(key).is_some_and(serde_json::Value::is_string) {
                return Err(row_err(format!("missing string field {key:?}")));
            }
        }
    }
    Ok(lines)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixCounts {
    pub theory: usize,
    pub user: usize,
}

/// Source counts for an `m:n` mix: the largest scale `s` with `s*m <= theory`
/// and `s*n <= user`, floored per side.
pub fn mix_counts(theory: usize, user: usize, m: u32, n: u32) -> Result<MixCounts> {
    if m == 0 && n == 0 {
        return Err(Error::invalid("mix ratio 0:0"));
    }
    let scale = |avail: usize, w: u32| {
        if w == 0 {
            f64::INFINITY
        } else {
            avail as f64 / f64::from(w)
        }
    };
    let s = scale(theory, m).min(scale(user, n));
    // Integer arithmetic where possible to avoid 10 * (9.999..) flooring to 99.
    let take = |w: u32, avail: usize| -> usize {
        if w == 0 {
            0
        } else {
            ((s * f64::from(w) + 1e-9).floor() as usize).min(avail)
        }
    };
    Ok(MixCounts {
        theory: take(m, theory),
        user: take(n, user),
    })
}

/// Subsamples each source to the `m:n` counts and writes a shuffled mix.
pub fn mix_datasets(
    theory_path: &Path,
    user_path: &Path,
    ratio_m: u32,
    ratio_n: u32,
    seed: u64,
    out_path: &Path,
) -> Result<MixCounts> {
    let theory = read_generic_records(theory_path)?;
    let user = read_generic_records(user_path)?;
    if (ratio_m > 0 && theory.is_empty()) || (ratio_n > 0 && user.is_empty()) {
        return Err(Error::invalid("mix input is empty"));
    }
    let counts = mix_counts(theory.len(), user.len(), ratio_m, ratio_n)?;
    let mut stream = rng::stream(seed);
    let mut pick = |lines: Vec<String>, k: usize| -> Vec<String> {
        let mut idx = rand::seq::index::sample(&mut stream, lines.len(), k).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| lines[i].clone()).collect()
    };
    let mut mixed = pick(theory, counts.theory);
    mixed.extend(pick(user, counts.user));
    mixed.shuffle(&mut stream);
    write_lines(out_path, mixed)?;
    Ok(counts)
}
