//! Expected running time, theoretical switching performance, virtual best
//! solvers and gain tables.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tracing::{RunTrace, TargetGrid, GRID_LEN};

/// Outcome of one run for a fixed target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub hitting_time: Option<u64>,
    /// Evaluations the run actually consumed.
    pub consumed: u64,
}

/// Sum of `min(T_i, consumed_i)` over all runs divided by the number of
/// successful runs; infinite without successes.
pub fn ert(runs: &[RunOutcome]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Usage("ERT of an empty run set".into()));
    }
    let mut total: u64 = 0;
    let mut successes: u64 = 0;
    for r in runs {
        match r.hitting_time {
            Some(t) => {
                total += t.min(r.consumed);
                successes += 1;
            }
            None => total += r.consumed,
        }
    }
    Ok(if successes == 0 { f64::INFINITY } else { total as f64 / successes as f64 })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub algorithm_label: String,
    pub function_id: u32,
    pub dimension: usize,
}

/// ERT at every grid target for one `(algorithm, function, dimension)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErtCurve {
    pub runs: usize,
    pub successes: Vec<usize>,
    pub ert: Vec<f64>,
    /// Unsuccessful runs that stopped before using their budget.
    pub early_stops: usize,
}

impl ErtCurve {
    pub fn from_traces(traces: &[&RunTrace]) -> Result<Self> {
        let mut ert_v = Vec::with_capacity(GRID_LEN);
        let mut successes = Vec::with_capacity(GRID_LEN);
        for k in 0..GRID_LEN {
            let outcomes: Vec<RunOutcome> = traces
                .iter()
                .map(|t| RunOutcome { hitting_time: t.hit(k), consumed: t.evals_used })
                .collect();
            successes.push(outcomes.iter().filter(|o| o.hitting_time.is_some()).count());
            ert_v.push(ert(&outcomes)?);
        }
        let early_stops = traces
            .iter()
            .filter(|t| t.hit(TargetGrid::FINAL).is_none() && t.evals_used < t.budget)
            .count();
        Ok(ErtCurve { runs: traces.len(), successes, ert: ert_v, early_stops })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErtTable {
    pub curves: BTreeMap<CellKey, ErtCurve>,
}

impl ErtTable {
    pub fn from_traces(traces: &[RunTrace]) -> Result<Self> {
        let mut groups: BTreeMap<CellKey, Vec<&RunTrace>> = BTreeMap::new();
        for t in traces {
            let key = CellKey {
                algorithm_label: t.algorithm_label.clone(),
                function_id: t.problem.function_id,
                dimension: t.problem.dimension,
            };
            groups.entry(key).or_default().push(t);
        }
        let mut curves = BTreeMap::new();
        for (key, runs) in groups {
            let curve = ErtCurve::from_traces(&runs)?;
            if curve.early_stops > 0 {
                log::info!(
                    "{} f{} d{}: {} unsuccessful runs stopped early and count their consumed evaluations",
                    key.algorithm_label,
                    key.function_id,
                    key.dimension,
                    curve.early_stops
                );
            }
            curves.insert(key, curve);
        }
        Ok(ErtTable { curves })
    }

    /// All `(function, dimension)` pairs present, in order.
    pub fn cells(&self) -> Vec<(u32, usize)> {
        let mut cells: Vec<(u32, usize)> = self.curves.keys().map(|k| (k.function_id, k.dimension)).collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Curves of one `(function, dimension)` pair, keyed by label.
    pub fn curves_for(&self, function_id: u32, dimension: usize) -> Vec<(&str, &ErtCurve)> {
        self.curves
            .iter()
            .filter(|(k, _)| k.function_id == function_id && k.dimension == dimension)
            .map(|(k, c)| (k.algorithm_label.as_str(), c))
            .collect()
    }

    pub fn get(&self, label: &str, function_id: u32, dimension: usize) -> Option<&ErtCurve> {
        self.curves.get(&CellKey { algorithm_label: label.to_string(), function_id, dimension })
    }
}

/// Expected cost of running `A1` to `tau` and `A2` from `tau` to `phi`:
/// `ert_a2[phi] + (ert_a1[tau] - ert_a2[tau])`, never below `ert_a1[tau]`.
pub fn theoretical_performance(ert_a1: &[f64], ert_a2: &[f64], tau: usize, phi: usize) -> f64 {
    assert!(tau <= phi && phi < ert_a1.len() && phi < ert_a2.len(), "need tau at or above phi on the grid");
    let (a1_tau, a2_tau, a2_phi) = (ert_a1[tau], ert_a2[tau], ert_a2[phi]);
    if !a1_tau.is_finite() || !a2_phi.is_finite() || !a2_tau.is_finite() {
        return f64::INFINITY;
    }
    let v = a2_phi + (a1_tau - a2_tau);
    v.max(a1_tau)
}

/// Best switching point among the grid indices in `grid` (all above `phi`).
/// Ties go to the larger target, i.e. the earlier switch.
pub fn best_tau(ert_a1: &[f64], ert_a2: &[f64], phi: usize, grid: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &k in grid {
        let v = theoretical_performance(ert_a1, ert_a2, k, phi);
        best = match best {
            None => Some((k, v)),
            Some((bk, bv)) if v < bv || (v == bv && k < bk) => Some((k, v)),
            keep => keep,
        };
    }
    best
}

/// Static and dynamic virtual best solvers for one `(function, dimension)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VbsReport {
    pub function_id: u32,
    pub dimension: usize,
    pub static_best: String,
    pub static_ert: f64,
    pub a1: String,
    pub a2: String,
    pub tau_index: usize,
    pub theoretical_ert: f64,
    pub actual_ert: Option<f64>,
}

impl VbsReport {
    pub fn is_switch(&self) -> bool {
        self.a1 != self.a2
    }

    pub fn gains(&self) -> Gains {
        gains(self.static_ert, self.theoretical_ert, self.actual_ert)
    }
}

/// Exhaustive search over ordered pairs (identity pairs included) and all
/// grid switching points above `phi`. `curves` must be non-empty.
pub fn vbs_dyn(function_id: u32, dimension: usize, curves: &[(&str, &ErtCurve)], phi: usize) -> Result<VbsReport> {
    let (static_label, static_curve) = curves
        .iter()
        .min_by(|a, b| a.1.ert[phi].total_cmp(&b.1.ert[phi]))
        .ok_or_else(|| Error::Usage(format!("no ERT curves for f{function_id} d{dimension}")))?;
    let static_ert = static_curve.ert[phi];
    let mut report = VbsReport {
        function_id,
        dimension,
        static_best: static_label.to_string(),
        static_ert,
        a1: static_label.to_string(),
        a2: static_label.to_string(),
        tau_index: 0,
        theoretical_ert: static_ert,
        actual_ert: None,
    };
    let grid: Vec<usize> = (0..phi).collect();
    for (l1, c1) in curves {
        for (l2, c2) in curves {
            if let Some((k, v)) = best_tau(&c1.ert, &c2.ert, phi, &grid) {
                if v < report.theoretical_ert {
                    report.a1 = l1.to_string();
                    report.a2 = l2.to_string();
                    report.tau_index = k;
                    report.theoretical_ert = v;
                }
            }
        }
    }
    Ok(report)
}

/// One report per `(function, dimension)` in `table`.
pub fn vbs_reports(table: &ErtTable, phi: usize) -> Result<Vec<VbsReport>> {
    table
        .cells()
        .into_iter()
        .map(|(f, d)| vbs_dyn(f, d, &table.curves_for(f, d), phi))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains {
    pub theoretical_vs_static: f64,
    pub actual_vs_static: Option<f64>,
    pub actual_vs_theoretical: Option<f64>,
}

/// Relative improvement of `new` over `base`; any infinite input gives
/// negative infinity.
pub fn relative_gain(base: f64, new: f64) -> f64 {
    if !base.is_finite() || !new.is_finite() {
        f64::NEG_INFINITY
    } else {
        (base - new) / base
    }
}

pub fn gains(static_ert: f64, theoretical_ert: f64, actual_ert: Option<f64>) -> Gains {
    Gains {
        theoretical_vs_static: relative_gain(static_ert, theoretical_ert),
        actual_vs_static: actual_ert.map(|a| relative_gain(static_ert, a)),
        actual_vs_theoretical: actual_ert.map(|a| relative_gain(theoretical_ert, a)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainKind {
    Theoretical,
    Actual,
}

/// One heatmap cell; `value` is `None` for cells without a switching use
/// case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub function_id: u32,
    pub dimension: usize,
    pub value: Option<f64>,
    pub raw: Option<f64>,
    pub negative: bool,
    pub infinite: bool,
}

impl HeatCell {
    /// Cells drawn with an `X`.
    pub fn crossed(&self) -> bool {
        self.negative || self.infinite
    }
}

/// Gain matrix over `functions x dimensions`. Negative gains are shown as
/// zero and flagged; infinite ERT values are flagged.
pub fn heatmap_data(reports: &[VbsReport], functions: &[u32], dimensions: &[usize], kind: GainKind) -> Vec<HeatCell> {
    let mut cells = Vec::with_capacity(functions.len() * dimensions.len());
    for &f in functions {
        for &d in dimensions {
            let report = reports.iter().find(|r| r.function_id == f && r.dimension == d && r.is_switch());
            let raw = report.and_then(|r| match kind {
                GainKind::Theoretical => Some(r.gains().theoretical_vs_static),
                GainKind::Actual => r.gains().actual_vs_static,
            });
            let infinite = raw.is_some_and(|g| g.is_infinite());
            let negative = raw.is_some_and(|g| g < 0.0 && !g.is_infinite());
            cells.push(HeatCell {
                function_id: f,
                dimension: d,
                value: raw.map(|g| if g.is_finite() { g.max(0.0) } else { 0.0 }),
                raw,
                negative,
                infinite,
            });
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UseCase {
    pub a1: String,
    pub a2: String,
    pub cells: Vec<(u32, usize)>,
}

impl UseCase {
    pub fn count(&self) -> usize {
        self.cells.len()
    }
}

/// Number of `(function, dimension)` pairs whose dynamic best is each
/// `(A1, A2)` pair; identity pairs are left out. Sorted by count, then name.
pub fn use_case_table(reports: &[VbsReport]) -> Vec<UseCase> {
    let mut map: BTreeMap<(String, String), Vec<(u32, usize)>> = BTreeMap::new();
    for r in reports.iter().filter(|r| r.is_switch()) {
        map.entry((r.a1.clone(), r.a2.clone())).or_default().push((r.function_id, r.dimension));
    }
    let mut out: Vec<UseCase> = map
        .into_iter()
        .map(|((a1, a2), mut cells)| {
            cells.sort_unstable();
            UseCase { a1, a2, cells }
        })
        .collect();
    out.sort_by(|a, b| b.count().cmp(&a.count()).then_with(|| (&a.a1, &a.a2).cmp(&(&b.a1, &b.a2))));
    out
}

fn fmt_real(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), fmt_real)
}

fn parse_real(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Parse(format!("not a number: '{s}'"))),
    }
}

pub fn write_ert_table<W: Write>(table: &ErtTable, mut out: W) -> Result<()> {
    writeln!(out, "algorithm\tfunction_id\tdimension\ttarget_exponent\tert\tsuccesses\truns")?;
    for (k, c) in &table.curves {
        for t in 0..GRID_LEN {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                k.algorithm_label,
                k.function_id,
                k.dimension,
                TargetGrid::exponent(t),
                fmt_real(c.ert[t]),
                c.successes[t],
                c.runs
            )?;
        }
    }
    Ok(())
}

const VBS_HEADER: &str = "function_id\tdimension\tstatic_best\tstatic_ert\ta1\ta2\ttau_exponent\ttheoretical_ert\tactual_ert\ttheoretical_gain\tactual_gain\tactual_vs_theoretical";

pub fn write_vbs_reports<W: Write>(reports: &[VbsReport], mut out: W) -> Result<()> {
    writeln!(out, "{VBS_HEADER}")?;
    for r in reports {
        let g = r.gains();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.function_id,
            r.dimension,
            r.static_best,
            fmt_real(r.static_ert),
            r.a1,
            r.a2,
            TargetGrid::exponent(r.tau_index),
            fmt_real(r.theoretical_ert),
            fmt_opt(r.actual_ert),
            fmt_real(g.theoretical_vs_static),
            fmt_opt(g.actual_vs_static),
            fmt_opt(g.actual_vs_theoretical),
        )?;
    }
    Ok(())
}

/// Reads a file written by [`write_vbs_reports`].
pub fn read_vbs_reports<R: BufRead>(input: R) -> Result<Vec<VbsReport>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 12 {
            return Err(Error::Parse(format!("line {}: expected 12 columns, got {}", i + 1, f.len())));
        }
        let exp = parse_real(f[6])?;
        out.push(VbsReport {
            function_id: f[0].parse().map_err(|_| Error::Parse(format!("line {}: bad function id", i + 1)))?,
            dimension: f[1].parse().map_err(|_| Error::Parse(format!("line {}: bad dimension", i + 1)))?,
            static_best: f[2].to_string(),
            static_ert: parse_real(f[3])?,
            a1: f[4].to_string(),
            a2: f[5].to_string(),
            tau_index: TargetGrid::index_of_exponent(exp)
                .ok_or_else(|| Error::Parse(format!("line {}: tau 1e{exp} is off the grid", i + 1)))?,
            theoretical_ert: parse_real(f[7])?,
            actual_ert: if f[8] == "-" { None } else { Some(parse_real(f[8])?) },
        });
    }
    Ok(out)
}

pub fn write_heatmap<W: Write>(cells: &[HeatCell], mut out: W) -> Result<()> {
    writeln!(out, "function_id\tdimension\tgain\traw_gain\tnegative\tinfinite\tmarker")?;
    for c in cells {
        let marker = match (c.value, c.crossed()) {
            (None, _) => "absent",
            (Some(_), true) => "X",
            (Some(_), false) => "",
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.function_id,
            c.dimension,
            fmt_opt(c.value),
            fmt_opt(c.raw),
            c.negative,
            c.infinite,
            marker
        )?;
    }
    Ok(())
}

pub fn write_use_cases<W: Write>(cases: &[UseCase], mut out: W) -> Result<()> {
    writeln!(out, "a1\ta2\tcount\tcells")?;
    for u in cases {
        let cells: Vec<String> = u.cells.iter().map(|(f, d)| format!("F{f}/{d}D")).collect();
        writeln!(out, "{}\t{}\t{}\t{}", u.a1, u.a2, u.count(), cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng as _;

    fn outcome(t: Option<u64>, c: u64) -> RunOutcome {
        RunOutcome { hitting_time: t, consumed: c }
    }

    fn curve(ert: Vec<f64>) -> ErtCurve {
        ErtCurve { runs: 1, successes: vec![1; ert.len()], ert, early_stops: 0 }
    }

    /// Non-decreasing random curve over the full grid.
    fn random_curve(rng: &mut crate::seed::Rng) -> Vec<f64> {
        let mut v = rng.random_range(1.0..50.0_f64).floor();
        (0..GRID_LEN)
            .map(|_| {
                v += rng.random_range(0.0..40.0_f64).floor();
                v
            })
            .collect()
    }

    #[test]
    fn ert_examples() {
        assert_eq!(ert(&[outcome(Some(100), 100), outcome(Some(200), 200)]).unwrap(), 150.0);
        assert_eq!(ert(&[outcome(Some(300), 300), outcome(None, 1000)]).unwrap(), 1300.0);
        assert_eq!(ert(&[outcome(None, 1000)]).unwrap(), f64::INFINITY);
        assert!(ert(&[]).is_err());
        // hitting time beyond consumption is capped
        assert_eq!(ert(&[outcome(Some(500), 400)]).unwrap(), 400.0);
    }

    #[test]
    fn ert_is_permutation_invariant() {
        let mut rng = rng_from_seed(1);
        let mut runs: Vec<RunOutcome> = (0..25)
            .map(|_| {
                let c = rng.random_range(1..1000);
                outcome(rng.random_bool(0.6).then(|| rng.random_range(1..=c)), c)
            })
            .collect();
        let a = ert(&runs).unwrap();
        runs.reverse();
        assert_eq!(a.to_bits(), ert(&runs).unwrap().to_bits());
    }

    #[test]
    fn theoretical_examples() {
        let mut a1 = vec![0.0; GRID_LEN];
        let mut a2 = vec![0.0; GRID_LEN];
        a1[10] = 100.0;
        a2[10] = 700.0;
        a2[50] = 1000.0;
        assert_eq!(theoretical_performance(&a1, &a2, 10, 50), 400.0);
        a1[10] = f64::INFINITY;
        assert_eq!(theoretical_performance(&a1, &a2, 10, 50), f64::INFINITY);
    }

    #[test]
    fn identity_pair_telescopes() {
        let mut rng = rng_from_seed(2);
        for _ in 0..50 {
            let c = random_curve(&mut rng);
            for tau in 0..TargetGrid::FINAL {
                assert_eq!(theoretical_performance(&c, &c, tau, TargetGrid::FINAL), c[TargetGrid::FINAL]);
            }
        }
    }

    #[test]
    fn theoretical_matches_brute_force_on_synthetic_tables() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let a = random_curve(&mut rng);
            let b = random_curve(&mut rng);
            let phi = rng.random_range(1..GRID_LEN);
            for tau in 0..phi {
                let direct = a[tau] + b[phi] - b[tau];
                let got = theoretical_performance(&a, &b, tau, phi);
                assert!((got - direct.max(a[tau])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn best_tau_ties_and_planted_minimum() {
        let a2 = vec![500.0; GRID_LEN];
        let a1: Vec<f64> = (0..GRID_LEN).map(|k| 10.0 + k as f64).collect();
        let grid: Vec<usize> = (0..50).collect();
        assert_eq!(best_tau(&a1, &a2, 50, &grid).unwrap().0, 0);
        let flat = vec![7.0; GRID_LEN];
        assert_eq!(best_tau(&flat, &flat, 50, &grid).unwrap().0, 0);

        // A1 cheap until 1e-3 then stuck; A2 slow early and fast late.
        let k3 = TargetGrid::index_of_exponent(-3.0).unwrap();
        let a1: Vec<f64> = (0..GRID_LEN).map(|k| if k <= k3 { 10.0 + k as f64 } else { 1e6 }).collect();
        let a2: Vec<f64> = (0..GRID_LEN).map(|k| if k <= k3 { 50.0 * k as f64 } else { 50.0 * k3 as f64 + 10.0 * (k - k3) as f64 }).collect();
        let (k, v) = best_tau(&a1, &a2, 50, &grid).unwrap();
        assert_eq!(k, k3);
        assert_eq!(v, a1[k3] + a2[50] - a2[k3]);
    }

    #[test]
    fn vbs_single_and_dominated() {
        let c = curve((0..GRID_LEN).map(|k| 10.0 * (k + 1) as f64).collect());
        let r = vbs_dyn(1, 2, &[("A", &c)], 50).unwrap();
        assert_eq!((r.a1.as_str(), r.a2.as_str()), ("A", "A"));
        assert_eq!(r.theoretical_ert, r.static_ert);
        assert_eq!(r.gains().theoretical_vs_static, 0.0);

        // B costs twice A at every target, and every increment too.
        let b = curve(c.ert.iter().map(|v| 2.0 * v).collect());
        let r = vbs_dyn(1, 2, &[("A", &c), ("B", &b)], 50).unwrap();
        assert_eq!((r.a1.as_str(), r.a2.as_str(), r.static_best.as_str()), ("A", "A", "A"));
    }

    #[test]
    fn pointwise_domination_alone_does_not_force_identity() {
        // A is cheaper at both targets, yet A up to the first target and B
        // afterwards is cheaper still because B's increment is tiny.
        let mut a = vec![10.0; GRID_LEN];
        let mut b = vec![95.0; GRID_LEN];
        for k in 1..GRID_LEN {
            a[k] = 100.0;
            b[k] = 101.0;
        }
        let r = vbs_dyn(1, 2, &[("A", &curve(a)), ("B", &curve(b))], 1).unwrap();
        assert_eq!((r.a1.as_str(), r.a2.as_str()), ("A", "B"));
        assert_eq!(r.theoretical_ert, 16.0);
    }

    #[test]
    fn vbs_matches_exhaustive_search() {
        let mut rng = rng_from_seed(4);
        for _ in 0..20 {
            let curves: Vec<ErtCurve> = (0..5).map(|_| curve(random_curve(&mut rng))).collect();
            let labels = ["A", "B", "C", "D", "E"];
            let named: Vec<(&str, &ErtCurve)> = labels.iter().copied().zip(curves.iter()).collect();
            let r = vbs_dyn(3, 5, &named, 50).unwrap();
            let mut best = f64::INFINITY;
            for x in &curves {
                for y in &curves {
                    for tau in 0..50 {
                        best = best.min((y.ert[50] + x.ert[tau] - y.ert[tau]).max(x.ert[tau]));
                    }
                }
            }
            assert_eq!(r.theoretical_ert, best);
            assert!(r.theoretical_ert <= r.static_ert);
        }
    }

    #[test]
    fn gain_examples() {
        let g = gains(705.0, 364.72, Some(271.64));
        assert!((g.actual_vs_static.unwrap() - 0.6147).abs() < 1e-3);
        assert!((g.actual_vs_theoretical.unwrap() - 0.2552).abs() < 1e-3);
        assert!((gains(1135.92, 500.0, Some(267.36)).actual_vs_static.unwrap() - 0.7646).abs() < 1e-3);
        assert_eq!(gains(100.0, f64::INFINITY, None).theoretical_vs_static, f64::NEG_INFINITY);
        assert_eq!(gains(100.0, 50.0, Some(f64::INFINITY)).actual_vs_static, Some(f64::NEG_INFINITY));
    }

    fn report(f: u32, d: usize, a1: &str, a2: &str, s: f64, t: f64, a: Option<f64>) -> VbsReport {
        VbsReport {
            function_id: f,
            dimension: d,
            static_best: a1.into(),
            static_ert: s,
            a1: a1.into(),
            a2: a2.into(),
            tau_index: 30,
            theoretical_ert: t,
            actual_ert: a,
        }
    }

    #[test]
    fn heatmap_capping_and_markers() {
        let reports = vec![
            report(1, 2, "BFGS", "CMAES", 100.0, 50.0, Some(108.0)),
            report(1, 3, "BFGS", "CMAES", 100.0, 50.0, Some(f64::INFINITY)),
            report(2, 2, "BFGS", "CMAES", 100.0, 50.0, Some(40.0)),
            report(2, 3, "DE", "DE", 100.0, 100.0, None),
        ];
        let cells = heatmap_data(&reports, &[1, 2], &[2, 3], GainKind::Actual);
        assert_eq!(cells[0].value, Some(0.0));
        assert!(cells[0].negative && cells[0].crossed());
        assert!((cells[0].raw.unwrap() + 0.08).abs() < 1e-12);
        assert!(cells[1].infinite && cells[1].crossed());
        assert_eq!(cells[2].value, Some(0.6));
        assert!(!cells[2].crossed());
        assert_eq!(cells[3].value, None);
        let theo = heatmap_data(&reports[2..3], &[2], &[2], GainKind::Theoretical);
        assert_eq!(theo[0].value, theo[0].raw);
    }

    #[test]
    fn use_case_counts() {
        let one = use_case_table(&[report(1, 2, "BFGS", "CMAES", 1.0, 1.0, None)]);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].count(), 1);
        let reports = vec![
            report(14, 2, "BFGS", "CMAES", 1.0, 1.0, None),
            report(10, 3, "BFGS", "CMAES", 1.0, 1.0, None),
            report(8, 5, "CMAES", "BFGS", 1.0, 1.0, None),
            report(1, 2, "CMAES", "CMAES", 1.0, 1.0, None),
            report(21, 5, "MLSL", "PSO", 1.0, 1.0, None),
            report(11, 3, "BFGS", "CMAES", 1.0, 1.0, None),
        ];
        let t = use_case_table(&reports);
        assert_eq!(t.len(), 3);
        assert_eq!((t[0].a1.as_str(), t[0].a2.as_str(), t[0].count()), ("BFGS", "CMAES", 3));
        assert_eq!(t[0].cells, vec![(10, 3), (11, 3), (14, 2)]);
        assert!(t.iter().all(|u| u.a1 != u.a2));
    }

    #[test]
    fn vbs_tsv_round_trip() {
        let reports = vec![
            report(14, 2, "BFGS", "CMAES", 705.0, 364.72, Some(271.64)),
            report(21, 5, "MLSL", "MLSL", f64::INFINITY, f64::INFINITY, None),
        ];
        let mut buf = Vec::new();
        write_vbs_reports(&reports, &mut buf).unwrap();
        let back = read_vbs_reports(buf.as_slice()).unwrap();
        assert_eq!(back, reports);
    }
}
