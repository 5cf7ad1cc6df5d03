// SPDX-License-Identifier: Apache-2.0

//! Pipelines behind the subcommands.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use condlab::capacity::{self, CapacityEstimate, RatioBounds};
use condlab::classifier::{self, Attempt, ClassificationReport, CriterionSpec, ReplayOutcome, Theta, Verdict};
use condlab::submanifold::{self, ImmersedSubmanifold};
use condlab::geometry::ConductivityField;
use nalgebra::DVector;
use serde::Serialize;

use crate::expr::{Expr, Vars};
use crate::scenario::{theta_from_expr, CapacityPlan, CriterionPlan, Resolved, SurfaceQuantity};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 3;

#[derive(Clone, Debug, Serialize)]
pub struct CapacitySection {
    pub rho: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub estimate: CapacityEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_bounds: Option<RatioBounds>,
}

/// Contents of report.json.
#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub manifold: String,
    pub conductivity: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub submanifold: Option<String>,
    #[serde(flatten)]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attempts: Option<Vec<Attempt>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contradictions: Option<Vec<(usize, usize)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<ReplayOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<CapacitySection>,
}

impl Report {
    fn new(res: &Resolved) -> Report {
        Report {
            scenario: res.name.clone(),
            seed: res.seed,
            manifold: res.manifold.label().to_string(),
            conductivity: res.field.label().to_string(),
            submanifold: res.submanifold.as_ref().map(|s| s.label().to_string()),
            classification: None,
            attempts: None,
            contradictions: None,
            replay: None,
            capacity: None,
        }
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.classification.as_ref().map(|c| c.verdict)
    }

    /// 3 for an undecided verdict, else 0.
    pub fn exit_code(&self) -> i32 {
        match self.verdict() {
            Some(Verdict::Undecided) => EXIT_UNDECIDED,
            _ => EXIT_OK,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// θ written by [`Theta::label`], read back exactly.
fn theta_from_label(label: &str) -> anyhow::Result<Theta> {
    let e = Expr::parse(label, Vars::RADIAL).with_context(|| format!("cannot read back theta label '{label}'"))?;
    Ok(theta_from_expr(label, e))
}

fn run_criterion(res: &Resolved, plan: &CriterionPlan, replay: bool, out: &mut Report) -> anyhow::Result<()> {
    let (rep, spec): (ClassificationReport, CriterionSpec) = match (plan, &res.submanifold) {
        (CriterionPlan::Fixed(spec), Some(s)) => (submanifold::classify_extrinsic(s, &res.field, spec)?, spec.clone()),
        (CriterionPlan::Fixed(spec), None) => (classifier::classify(&res.manifold, &res.field, spec)?, spec.clone()),
        (CriterionPlan::Auto(_), Some(_)) => bail!("automatic criterion search is intrinsic only"),
        (CriterionPlan::Auto(base), None) => {
            let auto = classifier::auto_classify(&res.manifold, &res.field, base)?;
            let theta = theta_from_label(&auto.report.parameters.theta)?;
            let spec = classifier::spec_from_report(base, &auto.report, theta);
            out.attempts = Some(auto.attempts);
            out.contradictions = Some(auto.contradictions);
            (auto.report, spec)
        }
    };
    if let Some(c) = &out.contradictions {
        if !c.is_empty() {
            bail!("criteria disagree: attempts {c:?} gave opposite verdicts");
        }
    }
    if replay {
        let outcome = match &res.submanifold {
            Some(s) => submanifold::replay_extrinsic(s, &res.field, &spec, &rep)?,
            None => classifier::replay(&res.manifold, &res.field, &spec, &rep)?,
        };
        if !outcome.all_identical() {
            let bad: Vec<String> = outcome
                .rows
                .iter()
                .filter(|r| !r.identical)
                .map(|r| format!("{:?}: recorded {} recomputed {}", r.kind, r.recorded, r.recomputed))
                .collect();
            bail!("certificate replay disagrees: {}", bad.join("; "));
        }
        out.replay = Some(outcome);
    }
    out.classification = Some(rep);
    Ok(())
}

fn run_capacity(res: &Resolved, plan: &CapacityPlan) -> anyhow::Result<CapacitySection> {
    let estimate = capacity::capacity_with(&res.manifold, &res.field, plan.rho, plan.big_r, &plan.ladder, &plan.options)?;
    let ratio_bounds = if plan.ratio_bounds {
        let &(nr, nt) = plan.ladder.first().expect("validated nonempty");
        Some(capacity::capacity_ratio_bounds(&res.manifold, &res.field, plan.rho, plan.big_r, nr, nt)?)
    } else {
        None
    };
    Ok(CapacitySection { rho: plan.rho, big_r: plan.big_r, estimate, ratio_bounds })
}

/// The `classify` pipeline.
pub fn classify(res: &Resolved, replay: bool) -> anyhow::Result<Report> {
    let plan = res.criterion.as_ref().context("scenario has no 'criterion' block")?;
    let mut out = Report::new(res);
    run_criterion(res, plan, replay, &mut out)?;
    Ok(out)
}

/// The `capacity` pipeline.
pub fn capacity(res: &Resolved) -> anyhow::Result<Report> {
    let plan = res.capacity.as_ref().context("scenario has no 'capacity' block")?;
    let mut out = Report::new(res);
    out.capacity = Some(run_capacity(res, plan)?);
    Ok(out)
}

/// Everything the scenario asks for.
pub fn full_report(res: &Resolved, replay: bool) -> anyhow::Result<Report> {
    if res.criterion.is_none() && res.capacity.is_none() {
        bail!("scenario has neither a 'criterion' nor a 'capacity' block");
    }
    let mut out = Report::new(res);
    if let Some(plan) = &res.criterion {
        run_criterion(res, plan, replay, &mut out)?;
    }
    if let Some(plan) = &res.capacity {
        out.capacity = Some(run_capacity(res, plan)?);
    }
    Ok(out)
}

fn surface_quantity(
    s: &ImmersedSubmanifold,
    w: &ConductivityField,
    q: SurfaceQuantity,
    u: &[f64],
) -> condlab::Result<f64> {
    let amb = s.ambient();
    let x = s.point(u)?;
    Ok(match q {
        SurfaceQuantity::Radius => amb.distance(&x)?,
        SurfaceQuantity::WMeanCurvatureRadial => {
            let hw = submanifold::w_mean_curvature(s, w, u)?;
            let nr = DVector::from_vec(amb.grad_r(&x)?);
            let f = submanifold::extrinsic_frame(s, u)?;
            f.inner(&hw.vector, &nr)
        }
        SurfaceQuantity::WMeanCurvatureNorm => {
            let hw = submanifold::w_mean_curvature(s, w, u)?;
            submanifold::extrinsic_frame(s, u)?.norm(&hw.vector)
        }
        SurfaceQuantity::MeanCurvatureNorm => {
            let f = submanifold::extrinsic_frame(s, u)?;
            f.norm(&f.mean_curvature)
        }
    })
}

/// Writes report.json and the CSV plot data into `dir`; returns the files
/// written.
pub fn write_report(res: &Resolved, report: &Report, dir: &Path) -> anyhow::Result<Vec<String>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
    written.push("report.json".to_string());
    if let Some(plan) = &res.capacity {
        let [nr, nt] = res.outputs.grid_resolution;
        let grid = capacity::solve_dirichlet_with(
            &res.manifold,
            &res.field,
            plan.rho,
            plan.big_r,
            nr,
            nt,
            &plan.options,
            None,
        )?;
        let path = dir.join(&res.outputs.grid_csv);
        let mut f = BufWriter::new(fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        grid.write_csv(&mut f)?;
        f.flush()?;
        written.push(res.outputs.grid_csv.clone());
    }
    if let Some(s) = &res.submanifold {
        let [nu, nv] = res.outputs.surface_resolution;
        let q = res.outputs.surface_quantity;
        let field = res.field.clone();
        let rows = submanifold::point_cloud(s, nu, nv, &|u: &[f64]| surface_quantity(s, &field, q, u))?;
        let path = dir.join(&res.outputs.surface_csv);
        let mut wtr = csv::Writer::from_path(&path).with_context(|| format!("cannot create {}", path.display()))?;
        for r in rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        written.push(res.outputs.surface_csv.clone());
    }
    Ok(written)
}
