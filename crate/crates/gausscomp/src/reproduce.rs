//! Re-running a reference table's configuration and comparing cell by cell.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::estimators::DerivativeRoute;
use crate::fixtures::{fixture, Cell, ReferenceTable};
use crate::limits::{adjusted_value, interpolated_max, lifted_exp_functional};
use crate::model::{ModelParams, Variant};
use crate::quadrature::{
    derivative_agreement, integrate_curve, uniform_grid, CurveResult, NodeGap, DEFAULT_STEP,
};
use crate::sampling::{Estimate, SeedPlan, GENERATOR};

/// Comparison of one printed cell with its reproduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellCheck {
    pub t: f64,
    pub column: String,
    pub expected: f64,
    pub observed: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Gap between the finite-beta curve and its large-beta limit at one row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitGap {
    pub t: f64,
    pub psi: f64,
    pub lim: f64,
    pub gap: f64,
    pub allowance: f64,
    pub pass: bool,
}

/// Outcome of reproducing one table.
#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub id: String,
    pub seed: u64,
    pub samples: usize,
    pub generator: &'static str,
    pub cells: Vec<CellCheck>,
    /// Only for non-lifted tables with a limit column.
    pub limit_gaps: Vec<LimitGap>,
    /// Derivative-route agreement at every node of the integration grid.
    pub route_agreement: Vec<NodeGap>,
    #[serde(skip)]
    pub curve: CurveResult,
}

impl TableReport {
    /// True when every printed cell is reproduced within tolerance.
    pub fn cells_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn failing_cells(&self) -> Vec<&CellCheck> {
        self.cells.iter().filter(|c| !c.pass).collect()
    }

    pub fn limit_gaps_pass(&self) -> bool {
        self.limit_gaps.iter().all(|g| g.pass)
    }

    pub fn routes_agree(&self) -> bool {
        self.route_agreement.iter().all(|g| g.ok)
    }

    /// Plain-text pass/fail matrix, one line per table row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {}  seed={} samples={} generator={}",
            self.id, self.seed, self.samples, self.generator
        );
        let mut columns: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !columns.contains(&c.column.as_str()) {
                columns.push(&c.column);
            }
        }
        let mut ts: Vec<f64> = self.cells.iter().map(|c| c.t).collect();
        ts.dedup();
        let _ = writeln!(
            out,
            "{:>5}  {}",
            "t",
            columns
                .iter()
                .map(|c| format!("{c:>26}"))
                .collect::<String>()
        );
        for t in ts {
            let mut line = format!("{t:>5.2}  ");
            for col in &columns {
                if let Some(c) = self.cells.iter().find(|c| c.t == t && c.column == *col) {
                    let mark = if c.pass { "ok" } else { "FAIL" };
                    line.push_str(&format!(
                        "{:>9.4} vs {:>8.4} {:>4}",
                        c.observed, c.expected, mark
                    ));
                }
            }
            let _ = writeln!(out, "{line}");
        }
        let failing = self.failing_cells().len();
        let _ = writeln!(
            out,
            "cells: {} of {} pass",
            self.cells.len() - failing,
            self.cells.len()
        );
        out
    }
}

fn check(t: f64, column: &str, expected: f64, observed: &Estimate, tolerance: f64) -> CellCheck {
    CellCheck {
        t,
        column: column.to_string(),
        expected,
        observed: observed.mean,
        std_error: observed.std_error,
        tolerance,
        pass: (observed.mean - expected).abs() <= tolerance,
    }
}

fn check_pair(
    cells: &mut Vec<CellCheck>,
    table: &ReferenceTable,
    n: usize,
    t: f64,
    column: &str,
    expected: &Cell,
    observed: &Estimate,
) -> Result<()> {
    cells.push(check(
        t,
        column,
        expected.value,
        observed,
        table.tolerances.psi,
    ));
    if let (Some(adj), Some(tol), Some(c3)) =
        (expected.adjusted, table.tolerances.adjusted, table.c3)
    {
        let value = adjusted_value(observed.mean, table.beta, c3, n)?;
        let est = Estimate {
            mean: value,
            ..*observed
        };
        cells.push(check(t, &format!("{column}_adjusted"), adj, &est, tol));
    }
    Ok(())
}

/// Runs a table's configuration under `plan` and compares every printed cell.
pub fn run_table(table: &ReferenceTable, plan: &SeedPlan) -> Result<TableReport> {
    let set = fixture(table.set)?;
    let params = ModelParams::new(
        &set,
        table.variant,
        table.m,
        table.beta,
        table.sign,
        table.c3.unwrap_or(0.0),
    )?;
    let grid = uniform_grid(0.0, 1.0, DEFAULT_STEP)?;
    let curve = integrate_curve(&set, &params, &grid, plan, DerivativeRoute::Computed)?;
    let n = set.dim();
    let general = table.variant != Variant::Spherical;

    let mut cells = Vec::new();
    let mut limit_gaps = Vec::new();
    for row in &table.rows {
        let k = curve
            .node(row.t)
            .expect("reference rows lie on the default grid");
        let tol = table.tolerances.derivative;
        cells.push(check(
            row.t,
            "dpsi_standard",
            row.dpsi_standard,
            &curve.dpsi_standard[k],
            tol,
        ));
        cells.push(check(
            row.t,
            "dpsi_computed",
            row.dpsi_computed,
            &curve.dpsi_computed[k],
            tol,
        ));
        check_pair(
            &mut cells,
            table,
            n,
            row.t,
            "psi_int_standard",
            &row.psi_from_standard,
            &curve.psi_from_standard[k],
        )?;
        check_pair(
            &mut cells,
            table,
            n,
            row.t,
            "psi_int_computed",
            &row.psi_from_computed,
            &curve.psi_from_computed[k],
        )?;
        check_pair(
            &mut cells,
            table,
            n,
            row.t,
            "psi_direct",
            &row.psi_direct,
            &curve.psi_direct[k],
        )?;

        if let Some(lim_cell) = &row.lim {
            match table.lim_scale() {
                Some(c3s) => {
                    let lim =
                        lifted_exp_functional(&set, table.m, table.sign, c3s, row.t, plan)?.raw;
                    check_pair(&mut cells, table, n, row.t, "lim", lim_cell, &lim)?;
                }
                None => {
                    let lim = interpolated_max(&set, table.m, table.sign, row.t, plan, general)?;
                    cells.push(check(
                        row.t,
                        "lim",
                        lim_cell.value,
                        &lim,
                        table.tolerances.psi,
                    ));
                    let psi = curve.psi_direct[k];
                    let gap = (psi.mean - lim.mean).abs();
                    let allowance = table.tolerances.psi + 3.0 * psi.combined_se(&lim);
                    limit_gaps.push(LimitGap {
                        t: row.t,
                        psi: psi.mean,
                        lim: lim.mean,
                        gap,
                        allowance,
                        pass: gap <= allowance,
                    });
                }
            }
        }
    }

    Ok(TableReport {
        id: table.id.to_string(),
        seed: plan.master_seed,
        samples: plan.replications,
        generator: GENERATOR,
        cells,
        limit_gaps,
        route_agreement: derivative_agreement(&curve),
        curve,
    })
}
