//! End-to-end run driven by a flat JSON config: closed form, direct solve,
//! classification, calibration, refutation and pricing.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bvp::{calibrate, refute_rc, SearchConfig, Seed};
use crate::closed_form::BluntProfile;
use crate::direct::{self, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::ScalarField;
use crate::params::ModelParams;
use crate::pricing::{double_conjugate_gap, price_menu, product_intensity};
use crate::regions::{classify, extract_interface, RegionMap, DEFAULT_RANK_TOL, DEFAULT_ZERO_TOL};
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    ClosedForm,
    SolveDirect,
    Classify,
    Calibrate,
    RefuteRc,
    PriceMenu,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::ClosedForm,
        Stage::SolveDirect,
        Stage::Classify,
        Stage::Calibrate,
        Stage::RefuteRc,
        Stage::PriceMenu,
    ];

    fn needs_solution(self) -> bool {
        matches!(self, Stage::Classify | Stage::Calibrate | Stage::PriceMenu)
    }
}

/// Pipeline configuration. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub a: f64,
    pub n: usize,
    pub tol: f64,
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub stencil_width: u8,
    pub rank_tol: f64,
    pub zero_tol: f64,
    pub calibrate_k: usize,
    /// Evaluation budget per calibration grid level.
    pub calibrate_max_evals: usize,
    /// Product-space extent; `a + 1` when absent.
    pub y_max: Option<f64>,
    /// Product grid points per side; `n` when absent.
    pub price_grid: Option<usize>,
    pub intensity_bins: usize,
    pub table_rows: usize,
    pub stages: Vec<Stage>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        let search = SearchConfig::default();
        PipelineConfig {
            a: 1.0,
            n: 64,
            tol: 1e-9,
            kkt_tol: solver.kkt_tol,
            max_iters: solver.max_iters,
            stencil_width: solver.stencil_width,
            rank_tol: DEFAULT_RANK_TOL,
            zero_tol: DEFAULT_ZERO_TOL,
            calibrate_k: search.k,
            calibrate_max_evals: 600,
            y_max: None,
            price_grid: None,
            intensity_bins: 32,
            table_rows: 101,
            stages: Stage::ALL.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("pipeline config: {e}")))
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.a, self.n, self.tol)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { max_iters: self.max_iters, kkt_tol: self.kkt_tol, stencil_width: self.stencil_width, ..Default::default() }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig { k: self.calibrate_k, max_evals: self.calibrate_max_evals, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.solver().validate()?;
        self.search().validate()?;
        if !(self.rank_tol > 0.0 && self.zero_tol > 0.0) {
            return invalid("rank_tol and zero_tol must be positive");
        }
        if self.y_max.is_some_and(|y| !(y > 0.0 && y.is_finite())) {
            return invalid("y_max must be positive");
        }
        if self.price_grid.is_some_and(|m| m < 2) || self.intensity_bins == 0 {
            return invalid("price_grid must be at least 2 and intensity_bins positive");
        }
        if self.stages.is_empty() {
            return invalid("no stages requested");
        }
        if let Some(s) = self.stages.iter().find(|s| s.needs_solution()) {
            if !self.stages.contains(&Stage::SolveDirect) {
                return invalid(format!("stage {} needs solve-direct", stage_name(*s)));
            }
        }
        Ok(())
    }
}

fn stage_name(s: Stage) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
    /// Not run because a stage it depends on failed.
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub message: String,
    pub outputs: Vec<String>,
    pub metrics: Value,
    /// Set when the failure was caused by bad input rather than numerics.
    #[serde(skip)]
    pub validation_failure: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub ok: bool,
}

impl Summary {
    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }
}

struct Run<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl Run<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        Ok(w.flush()?)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut body = serde_json::to_string_pretty(value)?;
        body.push('\n');
        self.text(name, &body)
    }
}

#[derive(Default)]
struct State {
    u: Option<ScalarField>,
    map: Option<RegionMap>,
}

/// Runs the configured stages in canonical order and writes their outputs
/// plus `summary.json` into `out`. Stage errors are recorded, not raised;
/// only an invalid config or an unwritable directory is an `Err`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut stages: Vec<Stage> = cfg.stages.clone();
    stages.sort();
    stages.dedup();
    let mut state = State::default();
    let mut records = Vec::new();
    for stage in stages {
        let blocked = stage.needs_solution() && state.u.is_none();
        let mut run = Run { dir: out, outputs: Vec::new() };
        let record = if blocked {
            StageRecord {
                stage,
                status: StageStatus::Skipped,
                message: "solve-direct did not produce a solution".into(),
                outputs: Vec::new(),
                metrics: Value::Null,
                validation_failure: false,
            }
        } else {
            match run_stage(stage, cfg, &mut state, &mut run) {
                Ok((message, metrics)) => StageRecord {
                    stage,
                    status: StageStatus::Ok,
                    message,
                    outputs: run.outputs,
                    metrics,
                    validation_failure: false,
                },
                Err(e) => StageRecord {
                    stage,
                    status: StageStatus::Failed,
                    message: e.to_string(),
                    outputs: run.outputs,
                    metrics: Value::Null,
                    validation_failure: e.is_validation(),
                },
            }
        };
        records.push(record);
    }
    let ok = records.iter().all(|r| r.status == StageStatus::Ok);
    let summary = Summary { config: cfg.clone(), stages: records, ok };
    let mut body = serde_json::to_string_pretty(&summary)?;
    body.push('\n');
    fs::write(out.join("summary.json"), body)?;
    Ok(summary)
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.join("summary.json")
}

fn run_stage(stage: Stage, cfg: &PipelineConfig, st: &mut State, run: &mut Run) -> Result<(String, Value)> {
    let params = cfg.params()?;
    match stage {
        Stage::ClosedForm => {
            let prof = BluntProfile::new(params.a);
            let mut w = run.create("closed_form.csv")?;
            prof.write_table_csv(&mut w, cfg.table_rows)?;
            w.flush()?;
            run.json("closed_form.json", &prof)?;
            Ok(("blunt profile tabulated".into(), json!({ "t05": prof.t05, "c0": prof.c0, "t15_rc": prof.t15_rc })))
        }
        Stage::SolveDirect => {
            let (u, report) = direct::solve(&params, &cfg.solver())?;
            let mut w = run.create("u.csv")?;
            u.write_csv(&mut w)?;
            w.flush()?;
            run.json("direct_report.json", &report)?;
            run.text("u.svg", &svg::field_svg(&u, &[]))?;
            let message = if report.converged { "converged" } else { "iteration limit reached" };
            let metrics = serde_json::to_value(report)?;
            st.u = Some(u);
            Ok((message.into(), metrics))
        }
        Stage::Classify => {
            let u = st.u.as_ref().expect("checked by the caller");
            let map = classify(u, cfg.rank_tol, cfg.zero_tol)?;
            let mut w = run.create("labels.csv")?;
            map.write_csv(&mut w)?;
            w.flush()?;
            let curve = extract_interface(&map).ok();
            if let Some(c) = &curve {
                let mut w = run.create("interface.csv")?;
                c.write_csv(&mut w)?;
                w.flush()?;
            }
            run.text("regions.svg", &svg::regions_svg(&map, curve.as_ref()))?;
            let mut fractions = serde_json::Map::new();
            for r in crate::regions::Region::ALL {
                fractions.insert(r.as_str().into(), json!(map.fraction(r)));
            }
            let metrics = json!({
                "fractions": fractions,
                "interface_t_min": curve.as_ref().map(|c| c.t_min()),
                "interface_t_max": curve.as_ref().map(|c| c.t_max()),
                "interface_asymmetry": curve.as_ref().map(|c| c.asymmetry()),
            });
            st.map = Some(map);
            let message = if curve.is_some() { "regions labelled" } else { "regions labelled; no interface found" };
            Ok((message.into(), metrics))
        }
        Stage::Calibrate => {
            let u = st.u.as_ref().expect("checked by the caller");
            if st.map.is_none() {
                st.map = Some(classify(u, cfg.rank_tol, cfg.zero_tol)?);
            }
            let seed = Seed::from_map(st.map.as_ref().expect("set above"))?;
            let (report, asm) = calibrate(&params, &cfg.search(), &seed)?;
            run.json("calibration.json", &report)?;
            let mut sup_diff = None;
            if let Some(asm) = &asm {
                let mut w = run.create("fan.csv")?;
                asm.fan.write_csv(&mut w)?;
                w.flush()?;
                let mut w = run.create("u_calibrated.csv")?;
                asm.field.write_csv(&mut w)?;
                w.flush()?;
                let overlay = vec![asm.problem.domain.interface.clone()];
                run.text("u_calibrated.svg", &svg::field_svg(&asm.field, &overlay))?;
                sup_diff = Some(asm.field.max_abs_diff(u));
            }
            let metrics = json!({
                "objective": report.best_evaluation.objective,
                "extra_l2": report.best_evaluation.extra_l2,
                "ansatz_extra_l2": report.ansatz_evaluation.extra_l2,
                "t10": report.best.t10,
                "evaluations": report.evaluations,
                "sup_diff_direct": sup_diff,
            });
            Ok((report.message, metrics))
        }
        Stage::RefuteRc => {
            let report = refute_rc(&params)?;
            run.json("refute_rc.json", &report)?;
            let metrics = json!({
                "min_uxx": report.min_uxx,
                "extra_residual_l2": report.extra_residual_l2,
                "phi_ansatz": report.phi_ansatz,
            });
            Ok((report.verdict, metrics))
        }
        Stage::PriceMenu => {
            let u = st.u.as_ref().expect("checked by the caller");
            let y_max = cfg.y_max.unwrap_or(params.a + 1.0);
            let menu = price_menu(u, y_max, cfg.price_grid.unwrap_or(params.n))?;
            let mut w = run.create("prices.csv")?;
            menu.write_csv(&mut w)?;
            w.flush()?;
            let gap = double_conjugate_gap(crate::par::Exec::default(), u, &menu);
            let intensity = product_intensity(u, cfg.intensity_bins, y_max)?;
            let mut w = run.create("intensity.csv")?;
            intensity.write_csv(&mut w)?;
            w.flush()?;
            run.text("intensity.svg", &svg::intensity_svg(&intensity))?;
            let metrics = json!({
                "price_at_origin": menu.get(0, 0),
                "min_increment": menu.min_increment(),
                "min_second_difference": menu.min_second_difference(),
                "double_conjugate_gap": gap,
                "intensity_mass": intensity.total(),
                "origin_bin_mass": intensity.get(0, 0),
            });
            run.json("pricing.json", &metrics)?;
            Ok(("menu priced".into(), metrics))
        }
    }
}
