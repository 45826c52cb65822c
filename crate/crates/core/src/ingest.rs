//! Participant tables: parsing, attribute derivation, binning, and classes.
//!
//! The table header is `participant_id,p,k,prop_1..prop_T` with fractions
//! given as percent numbers. Amounts are rebuilt from the fractions along one
//! noise path shared by every participant.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::elicitation::{
    alpha_from_p, theta_from_reliance, RelianceScore, DEFAULT_RISKY_PAYOFF, DEFAULT_SURE_PAYOFF,
    MAX_RELIANCE,
};
use crate::error::{Error, Result};
use crate::market::{amounts_from_proportions, BrownianPath, DecisionPath, MarketParams, ProportionPath};

pub const DEFAULT_RECONSTRUCTION_SEED: u64 = 0;

/// Left edges of the risk-aversion bins; the last edge is also a singleton bin.
pub const ALPHA_EDGES: [f64; 5] = [0.09, 0.13, 0.19, 0.26, 0.38];
pub const THETA_BIN_WIDTH: f64 = 1e-8;
pub const THETA_BINS: usize = 11;
pub const ALPHA_BINS: usize = ALPHA_EDGES.len();
/// Values this close to an edge are treated as sitting on it. Risk aversion
/// recovered from a questionnaire probability is only accurate to ~1e-12.
pub const EDGE_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    pub p: f64,
    pub k: u32,
    /// Percent values as reported.
    pub fractions: Vec<f64>,
    pub alpha: f64,
    pub theta: f64,
    pub amounts: Vec<f64>,
    pub wealth: Vec<f64>,
    pub class: (usize, usize),
}

impl ParticipantRecord {
    pub fn decisions(&self) -> DecisionPath {
        DecisionPath::new(self.amounts.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    OutOfModelP,
    RelianceOutOfRange,
    AlphaOutOfRange,
    ThetaOutOfRange,
}

impl ExclusionReason {
    pub fn code(self) -> &'static str {
        match self {
            ExclusionReason::OutOfModelP => "out_of_model_p",
            ExclusionReason::RelianceOutOfRange => "reliance_out_of_range",
            ExclusionReason::AlphaOutOfRange => "alpha_out_of_range",
            ExclusionReason::ThetaOutOfRange => "theta_out_of_range",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub line: u64,
    pub participant_id: String,
    pub reason: ExclusionReason,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ingested {
    pub accepted: Vec<ParticipantRecord>,
    pub excluded: Vec<Exclusion>,
}

fn snap(x: f64, edge: f64) -> f64 {
    if (x - edge).abs() <= EDGE_SNAP {
        edge
    } else {
        x
    }
}

pub fn alpha_bin(alpha: f64) -> Result<usize> {
    let a = ALPHA_EDGES.iter().fold(alpha, |a, &e| snap(a, e));
    let (lo, hi) = (ALPHA_EDGES[0], ALPHA_EDGES[ALPHA_BINS - 1]);
    if !(lo..=hi).contains(&a) {
        return Err(Error::OutOfRange(format!("alpha {alpha} outside [{lo}, {hi}]")));
    }
    Ok(ALPHA_EDGES.iter().rposition(|&e| a >= e).unwrap_or(0))
}

pub fn theta_bin(theta: f64) -> Result<usize> {
    let scaled = theta / THETA_BIN_WIDTH;
    let nearest = scaled.round();
    let s = if (scaled - nearest).abs() <= EDGE_SNAP * 1e3 {
        nearest
    } else {
        scaled
    };
    if !(0.0..=(THETA_BINS - 1) as f64).contains(&s) {
        return Err(Error::OutOfRange(format!("theta {theta:e} outside [0, 1e-7]")));
    }
    Ok(s.floor() as usize)
}

/// Class indices `(m, n)` for an attribute pair.
pub fn bin_attributes(alpha: f64, theta: f64) -> Result<(usize, usize)> {
    Ok((alpha_bin(alpha)?, theta_bin(theta)?))
}

/// Left-endpoint representative of a class.
pub fn class_representative(class: (usize, usize)) -> Result<(f64, f64)> {
    let (m, n) = class;
    if m >= ALPHA_BINS || n >= THETA_BINS {
        return Err(Error::OutOfRange(format!("class ({m}, {n}) does not exist")));
    }
    Ok((ALPHA_EDGES[m], n as f64 / 1e8))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeClass {
    pub m: usize,
    pub n: usize,
    pub representative: (f64, f64),
    pub members: Vec<String>,
}

/// Partition by class; empty classes are omitted. Ordered by `(m, n)`.
pub fn group_classes(records: &[ParticipantRecord]) -> Vec<AttributeClass> {
    let mut by: BTreeMap<(usize, usize), Vec<String>> = BTreeMap::new();
    for r in records {
        by.entry(r.class).or_default().push(r.id.clone());
    }
    by.into_iter()
        .map(|((m, n), members)| AttributeClass {
            m,
            n,
            representative: class_representative((m, n)).expect("binned class"),
            members,
        })
        .collect()
}

/// Decision paths of the records grouped by class.
pub fn class_paths(records: &[ParticipantRecord]) -> BTreeMap<(usize, usize), Vec<DecisionPath>> {
    let mut by: BTreeMap<(usize, usize), Vec<DecisionPath>> = BTreeMap::new();
    for r in records {
        by.entry(r.class).or_default().push(r.decisions());
    }
    by
}

fn row_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Row {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn expected_header(t: usize) -> Vec<String> {
    let mut h = vec!["participant_id".to_string(), "p".into(), "k".into()];
    h.extend((1..=t).map(|i| format!("prop_{i}")));
    h
}

/// Reconstructs one participant; `Ok(Err(_))` is an exclusion.
fn derive(
    params: &MarketParams,
    noise: &BrownianPath,
    id: String,
    p: f64,
    k: u32,
    fractions: Vec<f64>,
    line: u64,
) -> Result<std::result::Result<ParticipantRecord, Exclusion>> {
    let exclude = |reason, detail: String| {
        Ok(Err(Exclusion {
            line,
            participant_id: id.clone(),
            reason,
            detail,
        }))
    };
    let alpha = match alpha_from_p(p, DEFAULT_RISKY_PAYOFF, DEFAULT_SURE_PAYOFF) {
        Ok(a) => a,
        Err(e @ Error::OutOfModel { .. }) => return exclude(ExclusionReason::OutOfModelP, e.to_string()),
        Err(e) => return Err(e),
    };
    if k > MAX_RELIANCE {
        return exclude(
            ExclusionReason::RelianceOutOfRange,
            format!("reliance score {k} outside 0..=10"),
        );
    }
    let theta = theta_from_reliance(RelianceScore::new(k)?);
    let m = match alpha_bin(alpha) {
        Ok(m) => m,
        Err(e) => return exclude(ExclusionReason::AlphaOutOfRange, e.to_string()),
    };
    let n = match theta_bin(theta) {
        Ok(n) => n,
        Err(e) => return exclude(ExclusionReason::ThetaOutOfRange, e.to_string()),
    };
    let (plan, wealth) =
        amounts_from_proportions(params, &ProportionPath::from_percents(&fractions), noise)?;
    Ok(Ok(ParticipantRecord {
        id,
        p,
        k,
        fractions,
        alpha,
        theta,
        amounts: plan.amounts,
        wealth: wealth.funds,
        class: (m, n),
    }))
}

/// Parses a participant table and reconstructs amounts along the noise
/// path drawn from `reconstruction_seed`.
pub fn read_participants(
    path: &Path,
    params: &MarketParams,
    reconstruction_seed: u64,
) -> Result<Ingested> {
    params.validate()?;
    let t = params.decision_count();
    let noise = params.noise(reconstruction_seed)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| row_error(path, 1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != expected_header(t) {
        return Err(row_error(
            path,
            1,
            format!("header must be {}", expected_header(t).join(",")),
        ));
    }
    let mut out = Ingested::default();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != t + 3 {
            return Err(row_error(
                path,
                line,
                format!("expected {} fields, found {}", t + 3, rec.len()),
            ));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| row_error(path, line, format!("{name}: not a number: {:?}", &rec[i])))
        };
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(row_error(path, line, "empty participant_id"));
        }
        let p = num(1, "p")?;
        let k: u32 = rec[2]
            .parse()
            .map_err(|_| row_error(path, line, format!("k: not a non-negative integer: {:?}", &rec[2])))?;
        let fractions = (0..t)
            .map(|i| num(3 + i, &format!("prop_{}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        match derive(params, &noise, id, p, k, fractions, line)? {
            Ok(r) => out.accepted.push(r),
            Err(x) => out.excluded.push(x),
        }
    }
    Ok(out)
}

pub fn write_exclusions(path: &Path, excluded: &[Exclusion]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for x in excluded {
        let line = serde_json::to_string(x).expect("exclusion serialises");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of a participant table.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticipantRow {
    pub id: String,
    pub p: f64,
    pub k: u32,
    pub fractions: Vec<f64>,
}

pub fn write_participants(path: &Path, rows: &[ParticipantRow]) -> Result<()> {
    let t = rows.first().map_or(10, |r| r.fractions.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{other:?}")),
    })?;
    let csv_err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(expected_header(t)).map_err(csv_err)?;
    for r in rows {
        if r.fractions.len() != t {
            return Err(Error::invalid("participant rows differ in length"));
        }
        let mut fields = vec![r.id.clone(), format!("{}", r.p), r.k.to_string()];
        fields.extend(r.fractions.iter().map(|f| format!("{f}")));
        w.write_record(fields).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_examples() {
        assert_eq!(bin_attributes(0.13, 7e-8).unwrap(), (1, 7));
        assert_eq!(bin_attributes(0.38, 1e-7).unwrap(), (4, 10));
        assert_eq!(bin_attributes(0.09, 0.0).unwrap(), (0, 0));
        assert_eq!(bin_attributes(0.379, 9.9e-8).unwrap(), (3, 9));
        assert!(matches!(bin_attributes(0.05, 0.0), Err(Error::OutOfRange(_))));
        assert!(matches!(bin_attributes(0.2, 1.1e-7), Err(Error::OutOfRange(_))));
        assert!(bin_attributes(0.381, 0.0).is_err());
    }

    #[test]
    fn edges_recovered_from_probabilities_snap() {
        use crate::elicitation::p_from_alpha;
        for (i, &e) in ALPHA_EDGES.iter().enumerate() {
            let a = alpha_from_p(p_from_alpha(e, 20.0, 6.0), 20.0, 6.0).unwrap();
            assert_eq!(alpha_bin(a).unwrap(), i);
        }
    }

    #[test]
    fn every_reliance_point_lands_in_its_bin() {
        for k in 0..=10u32 {
            let th = theta_from_reliance(RelianceScore::new(k).unwrap());
            assert_eq!(theta_bin(th).unwrap(), k as usize);
        }
    }

    #[test]
    fn binning_is_total_on_a_lattice() {
        let mut counts = [[0usize; THETA_BINS]; ALPHA_BINS];
        for i in 0..=2900 {
            let a = 0.09 + 0.29 * f64::from(i) / 2900.0;
            for j in 0..=1000 {
                let th = 1e-7 * f64::from(j) / 1000.0;
                let (m, n) = bin_attributes(a, th).unwrap();
                counts[m][n] += 1;
                let (ra, rt) = class_representative((m, n)).unwrap();
                assert!(ra <= a + EDGE_SNAP && rt <= th + 1e-15);
            }
        }
        assert!(counts.iter().flatten().all(|&c| c > 0));
    }

    #[test]
    fn grouping_partitions() {
        let rec = |id: &str, class| ParticipantRecord {
            id: id.into(),
            p: 0.5,
            k: 0,
            fractions: vec![],
            alpha: 0.1,
            theta: 0.0,
            amounts: vec![],
            wealth: vec![],
            class,
        };
        let rs = vec![rec("a", (1, 2)), rec("b", (1, 3)), rec("c", (1, 2))];
        let cs = group_classes(&rs);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].members, vec!["a", "c"]);
        assert_eq!(cs[0].representative, (0.13, 2e-8));
        assert_eq!(cs.iter().map(|c| c.members.len()).sum::<usize>(), 3);
    }
}
