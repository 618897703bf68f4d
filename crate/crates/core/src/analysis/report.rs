use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    auc, exploration_grid, exploration_stats, regret_ratio_auc, spearman, welch_t_test, AnalysisError, GapStats,
    PairLayout,
};
use crate::harness::{PairRecord, RunResult, SuiteResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub env_id: String,
    pub target: String,
    pub r_l: f64,
    pub r_g: f64,
    pub r_lg: f64,
    pub p_lg: f64,
    pub p_l: f64,
    pub p_g: f64,
    pub d_lg: f64,
    pub auc_l: f64,
    pub auc_g: f64,
    pub r_max: f64,
    /// `inf` when the generalization regret is zero.
    pub regret_ratio: f64,
    /// Welch t of G finals against L finals (positive favors G).
    pub t: f64,
    pub p: f64,
}

/// D_LG means of the pairs where G won versus where L won.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub n_g_better: usize,
    pub n_l_better: usize,
    pub mean_d_g_better: f64,
    pub mean_d_l_better: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub rows: Vec<ReportRow>,
    pub grouping: Option<Grouping>,
    /// Spearman (rho, p) of D_LG against R_LG across pairs.
    pub spearman: Option<(f64, f64)>,
    /// True when the data contradict "D_LG is larger where L wins", or when
    /// the rank correlation and the grouped means point in opposite directions.
    pub sign_discrepancy: bool,
    pub notices: Vec<String>,
    pub failures: Vec<(String, String)>,
}

fn row(rec: &PairRecord) -> Result<ReportRow, AnalysisError> {
    let (l, g) = (&rec.learnability, &rec.generalization);
    let layout = PairLayout::from_run(l);
    let ex = exploration_stats(&l.visited_union, &g.visited_union, &layout.universe())?;
    let gap = GapStats::from_runs(l, g);
    let (auc_l, auc_g) = (auc(&l.curve), auc(&g.curve));
    let r_max = l.best_case_return;
    let regret_ratio = regret_ratio_auc(auc_l, auc_g, r_max).unwrap_or(f64::INFINITY);
    let (t, p) = welch_t_test(&g.final_returns(), &l.final_returns()).unwrap_or((f64::NAN, f64::NAN));
    Ok(ReportRow {
        env_id: rec.id.clone(),
        target: rec.target_label.clone(),
        r_l: gap.r_l,
        r_g: gap.r_g,
        r_lg: gap.r_lg,
        p_lg: ex.p_lg,
        p_l: ex.p_l,
        p_g: ex.p_g,
        d_lg: ex.d_lg,
        auc_l,
        auc_g,
        r_max,
        regret_ratio,
        t,
        p,
    })
}

/// Per-pair table, grouped D_LG comparison and rank correlation.
pub fn suite_report(suite: &SuiteResult) -> SuiteReport {
    let mut report = SuiteReport { failures: suite.failures.clone(), ..Default::default() };
    for rec in &suite.records {
        match row(rec) {
            Ok(r) => report.rows.push(r),
            Err(e) => report.notices.push(format!("{}: skipped ({e})", rec.id)),
        }
    }
    if report.rows.len() < 2 {
        report.notices.push(format!("grouping skipped: {} completed pair(s)", report.rows.len()));
        return report;
    }

    let pos: Vec<f64> = report.rows.iter().filter(|r| r.r_lg > 0.0).map(|r| r.d_lg).collect();
    let neg: Vec<f64> = report.rows.iter().filter(|r| r.r_lg < 0.0).map(|r| r.d_lg).collect();
    if pos.is_empty() || neg.is_empty() {
        report.notices.push(format!(
            "grouping skipped: {} pair(s) with R_LG > 0, {} with R_LG < 0",
            pos.len(),
            neg.len()
        ));
    } else {
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let (t, p) = welch_t_test(&neg, &pos).unwrap_or((f64::NAN, f64::NAN));
        report.grouping = Some(Grouping {
            n_g_better: pos.len(),
            n_l_better: neg.len(),
            mean_d_g_better: mean(&pos),
            mean_d_l_better: mean(&neg),
            t,
            p,
        });
    }

    let d: Vec<f64> = report.rows.iter().map(|r| r.d_lg).collect();
    let r: Vec<f64> = report.rows.iter().map(|r| r.r_lg).collect();
    match spearman(&d, &r) {
        Ok(s) => report.spearman = Some(s),
        Err(e) => report.notices.push(format!("spearman skipped: {e}")),
    }

    if let Some(g) = &report.grouping {
        let grouped_as_expected = g.mean_d_l_better > g.mean_d_g_better;
        let rho_conflicts = report.spearman.is_some_and(|(rho, _)| grouped_as_expected && rho > 0.0);
        report.sign_discrepancy = !grouped_as_expected || rho_conflicts;
    }
    report
}

fn f(x: f64) -> String {
    format!("{x}")
}

impl SuiteReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("env_id,target,r_l,r_g,r_lg,d_lg,p_lg,p_l,p_g,auc_l,auc_g,r_max,regret_ratio,t,p\n");
        for r in &self.rows {
            let cols = [
                r.env_id.clone(),
                r.target.clone(),
                f(r.r_l),
                f(r.r_g),
                f(r.r_lg),
                f(r.d_lg),
                f(r.p_lg),
                f(r.p_l),
                f(r.p_g),
                f(r.auc_l),
                f(r.auc_g),
                f(r.r_max),
                f(r.regret_ratio),
                f(r.t),
                f(r.p),
            ];
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        out
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pairs: {} completed, {} failed", self.rows.len(), self.failures.len());
        for (id, e) in &self.failures {
            let _ = writeln!(s, "  failed {id}: {e}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<34} {:>10} {:>10} {:>9} {:>7} {:>9} {:>10}", "pair", "R_L", "R_G", "R_LG", "D_LG", "regret", "p");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<34} {:>10.2} {:>10.2} {:>9.2} {:>7.2} {:>9.3} {:>10.3e}",
                r.env_id, r.r_l, r.r_g, r.r_lg, r.d_lg, r.regret_ratio, r.p
            );
        }
        let g_wins = self.rows.iter().filter(|r| r.r_lg >= 0.0 && r.p < 0.05).count();
        let _ = writeln!(s);
        let _ = writeln!(s, "pairs with R_G >= R_L at p < 0.05: {g_wins}");
        if let Some(g) = &self.grouping {
            let _ = writeln!(
                s,
                "mean D_LG where L won (R_LG < 0): {:.3} over {} pair(s)",
                g.mean_d_l_better, g.n_l_better
            );
            let _ = writeln!(
                s,
                "mean D_LG where G won (R_LG > 0): {:.3} over {} pair(s)",
                g.mean_d_g_better, g.n_g_better
            );
            let _ = writeln!(s, "between-group t = {:.4}, p = {:.4e}", g.t, g.p);
        }
        if let Some((rho, p)) = self.spearman {
            let _ = writeln!(s, "spearman(D_LG, R_LG): rho = {rho:.4}, p = {p:.4e}");
        }
        if self.sign_discrepancy {
            let _ = writeln!(
                s,
                "SIGN DISCREPANCY: grouped D_LG means and the D_LG/R_LG rank correlation do not both \
                 indicate larger divergence where the Learnability agent wins"
            );
        }
        for n in &self.notices {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

fn plot_data(r: &RunResult) -> String {
    let mut s = String::from("# episode mean_return std_return\n");
    for p in &r.curve {
        let _ = writeln!(s, "{} {} {}", p.episode, p.mean_return, p.std_return);
    }
    s
}

/// Writes report.csv, summary.txt, per-pair exploration grids and plot data.
pub fn write_report(report: &SuiteReport, suite: &SuiteResult, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir.join("grids"))?;
    fs::create_dir_all(dir.join("plots"))?;
    fs::write(dir.join("report.csv"), report.to_csv())?;
    fs::write(dir.join("summary.txt"), report.summary())?;
    for rec in &suite.records {
        let layout = PairLayout::from_run(&rec.learnability);
        let grid = exploration_grid(&rec.learnability.visited_union, &rec.generalization.visited_union, &layout);
        fs::write(dir.join("grids").join(format!("{}_exploration_grid.csv", rec.id)), grid.to_csv())?;
        fs::write(dir.join("grids").join(format!("{}_exploration_grid_color.csv", rec.id)), grid.to_color_csv())?;
        fs::write(dir.join("plots").join(format!("{}_learnability.dat", rec.id)), plot_data(&rec.learnability))?;
        fs::write(dir.join("plots").join(format!("{}_generalization.dat", rec.id)), plot_data(&rec.generalization))?;
    }
    Ok(())
}
