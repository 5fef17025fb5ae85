//! End-to-end training, scoring and diagnostics.
//!
//! Training windows are normalised with a scale fitted on the training series,
//! evenly thinned to `max_train_windows`, split into train and validation
//! parts and augmented with pseudo-anomalies. One signature-kernel Gram matrix
//! over all of these windows serves the whole grid search and the final refit.

use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, ConfusionMatrix, Metrics};
use crate::linalg::{Matrix, Vector};
use crate::manifold::{
    build_knn_graph, default_lambda_cap, effective_kernel, laplacian, rademacher_bound,
    verify_effective_kernel, EffectiveKernelReport, Laplacian,
};
use crate::sigkernel::{
    point_width_heuristic, rbf_width_heuristic, GramMatrix, Path, SigKernelConfig, SignatureKernel,
    StaticKernel,
};
use crate::svdd::{
    distances_from_kernel_rows, fit, solve_with_effective, Fitted, HyperParams, Model,
    SolverOptions,
};
use crate::timeseries::{
    inject_pseudo_anomalies, normalise_series, read_series, train_val_split, window,
    AnomalyInjectionConfig, AnomalyKind, RawSeries, WindowSet,
};

/// Pseudo-anomaly generation settings. `count = None` injects one per four
/// normal windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionSettings {
    pub kinds: Vec<AnomalyKind>,
    pub magnitude: f64,
    pub count: Option<usize>,
}

impl Default for InjectionSettings {
    fn default() -> Self {
        Self {
            kinds: AnomalyKind::ALL.to_vec(),
            magnitude: 1.0,
            count: None,
        }
    }
}

/// How the RBF width of the static kernel is chosen. The kNN graph always
/// uses the mean distance between flattened windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthRule {
    /// Mean distance between time points of the normal training windows.
    Points,
    /// Mean distance between flattened normal training windows.
    Windows,
    Fixed(f64),
}

/// Points entering the point-level width heuristic.
const WIDTH_SAMPLE_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train_data: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub window: usize,
    pub stride: usize,
    pub nu_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    pub c3_grid: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub k_neighbours: usize,
    pub injection: InjectionSettings,
    pub val_fraction: f64,
    pub jitter: f64,
    pub refinement: usize,
    pub static_width: WidthRule,
    pub solver: SolverOptions,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Upper bound on normal training windows (evenly thinned); 0 keeps all.
    pub max_train_windows: usize,
    /// Windows with score above this are flagged.
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_data: None,
            train_labels: None,
            test_data: None,
            test_labels: None,
            window: 100,
            stride: 1,
            nu_grid: vec![1.1, 2.0, 4.0, 10.0],
            q_grid: vec![16.0 / 15.0, 8.0 / 7.0, 4.0 / 3.0, 2.0, 4.0, 8.0, 16.0],
            c3_grid: vec![0.25, 2.5, 25.0],
            c1: 1.0,
            c2: 1.0,
            k_neighbours: crate::manifold::DEFAULT_K_NEIGHBOURS,
            injection: InjectionSettings::default(),
            val_fraction: 0.8,
            jitter: crate::sigkernel::DEFAULT_JITTER,
            refinement: 2,
            static_width: WidthRule::Points,
            solver: SolverOptions::default(),
            seed: 0,
            output: None,
            max_train_windows: 200,
            threshold: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.nu_grid.is_empty() || self.q_grid.is_empty() || self.c3_grid.is_empty() {
            return bad("hyperparameter grids must be nonempty");
        }
        if self.window < 2 || self.stride < 1 || self.refinement < 1 {
            return bad("window >= 2, stride >= 1 and refinement >= 1 are required");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if let WidthRule::Fixed(w) = self.static_width {
            if !(w.is_finite() && w > 0.0) {
                return bad("a fixed static width must be positive");
            }
        }
        for hp in self.grid(&self.c3_grid) {
            hp.validate()?;
        }
        Ok(())
    }

    /// Grid points in `c3`-major, then `ν`, then `q` order.
    pub fn grid(&self, c3_values: &[f64]) -> Vec<HyperParams> {
        let mut out = Vec::with_capacity(c3_values.len() * self.nu_grid.len() * self.q_grid.len());
        for &c3 in c3_values {
            for &nu in &self.nu_grid {
                for &q in &self.q_grid {
                    out.push(HyperParams {
                        q,
                        c1: self.c1,
                        c2: self.c2,
                        c3,
                        nu,
                    });
                }
            }
        }
        out
    }

    fn sig_config(&self) -> SigKernelConfig {
        SigKernelConfig {
            refinement: self.refinement,
            normalise: true,
        }
    }

    fn injection_for(&self, normals: usize, seed: u64) -> AnomalyInjectionConfig {
        AnomalyInjectionConfig {
            kinds: self.injection.kinds.clone(),
            magnitude: self.injection.magnitude,
            seed,
            count: self.injection.count.unwrap_or(normals / 4).max(1),
        }
    }
}

/// Training windows with their shared Gram matrix.
///
/// `windows` holds the train part followed by the validation part, each as
/// normals then pseudo-anomalies.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scale: f64,
    pub kernel: SignatureKernel,
    /// Graph width.
    pub width: f64,
    pub static_width: f64,
    pub windows: WindowSet,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub gram: GramMatrix,
}

impl Prepared {
    pub fn labels(&self, idx: &[usize]) -> Vector {
        Vector::from_iterator(idx.len(), idx.iter().map(|&i| self.windows.labels()[i]))
    }

    pub fn all_idx(&self) -> Vec<usize> {
        (0..self.windows.len()).collect()
    }

    pub fn laplacian(&self, idx: &[usize], k_neighbours: usize) -> Result<Laplacian> {
        let windows = self.windows.select(idx);
        let graph = build_knn_graph(windows.windows(), k_neighbours, self.width)?;
        Ok(laplacian(&graph))
    }
}

/// Normal training windows after normalisation, labelled windows dropped.
fn normal_windows(cfg: &RunConfig, train: &RawSeries) -> Result<(WindowSet, f64)> {
    let (normalised, scale) = normalise_series(train);
    let windows = window(&normalised, cfg.window, cfg.stride)?.with_label(1.0);
    let windows = windows.thin(cfg.max_train_windows);
    if windows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} normal training windows; at least 2 are needed",
            windows.len()
        )));
    }
    Ok((windows, scale))
}

pub fn prepare(cfg: &RunConfig, train: &RawSeries) -> Result<Prepared> {
    cfg.validate()?;
    let (normals, scale) = normal_windows(cfg, train)?;
    let (train_normals, val_normals) = train_val_split(&normals, cfg.val_fraction, cfg.seed)?;
    let train_pseudo = inject_pseudo_anomalies(
        &train_normals,
        &cfg.injection_for(train_normals.len(), cfg.seed),
    )?;
    let val_pseudo = inject_pseudo_anomalies(
        &val_normals,
        &cfg.injection_for(val_normals.len(), cfg.seed ^ 0x5eed),
    )?;
    let train_part = train_normals.concat(&train_pseudo)?;
    let val_part = val_normals.concat(&val_pseudo)?;
    let windows = train_part.concat(&val_part)?;

    let fallback = crate::sigkernel::DEFAULT_FALLBACK_WIDTH;
    let width = rbf_width_heuristic(normals.windows(), fallback)?;
    let static_width = match cfg.static_width {
        WidthRule::Points => {
            point_width_heuristic(normals.windows(), WIDTH_SAMPLE_POINTS, fallback)?
        }
        WidthRule::Windows => width,
        WidthRule::Fixed(w) => w,
    };
    let kernel = SignatureKernel::new(
        StaticKernel::Rbf {
            width: static_width,
        },
        cfg.sig_config(),
    );
    info!(
        "computing {} x {} signature-kernel gram matrix (width {static_width:.4})",
        windows.len(),
        windows.len()
    );
    let gram = kernel.gram(windows.windows(), cfg.jitter)?;
    Ok(Prepared {
        scale,
        kernel,
        width,
        static_width,
        train_idx: (0..train_part.len()).collect(),
        val_idx: (train_part.len()..windows.len()).collect(),
        windows,
        gram,
    })
}

/// Validation outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub hyperparams: HyperParams,
    /// NaN when the solve failed.
    pub val_au_pr: f64,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// Train on `prepared.train_idx` for every grid point and rank the validation
/// windows by squared distance to the centre.
pub fn grid_search(
    cfg: &RunConfig,
    prepared: &Prepared,
    c3_values: &[f64],
) -> Result<Vec<GridPoint>> {
    let tr = &prepared.train_idx;
    let va = &prepared.val_idx;
    let k = prepared.gram.select(tr).entries;
    let labels = prepared.labels(tr);
    let val_labels: Vec<f64> = va.iter().map(|&i| prepared.windows.labels()[i]).collect();
    let kx = Matrix::from_fn(va.len(), tr.len(), |i, j| {
        prepared.gram.entries[(va[i], tr[j])]
    });
    let val_self = vec![1.0; va.len()];
    let lap = prepared.laplacian(tr, cfg.k_neighbours)?;

    let mut out = Vec::new();
    for &c3 in c3_values {
        let effective = effective_kernel(&k, &lap, c3)?;
        let points: Vec<GridPoint> = cfg
            .grid(&[c3])
            .into_par_iter()
            .map(
                |hp| match solve_with_effective(&k, &effective, &lap, &labels, &hp, &cfg.solver) {
                    Ok(sol) => {
                        let beta = Vector::from_vec(sol.beta.clone());
                        let d2 = distances_from_kernel_rows(&kx, &val_self, &beta, sol.beta_k_beta);
                        let au_pr = eval::au_pr(d2.as_slice(), &val_labels).unwrap_or(f64::NAN);
                        GridPoint {
                            hyperparams: hp,
                            val_au_pr: au_pr,
                            converged: sol.converged,
                            kkt_residual: sol.kkt_residual,
                        }
                    }
                    Err(e) => {
                        warn!("grid point {hp:?} failed: {e}");
                        GridPoint {
                            hyperparams: hp,
                            val_au_pr: f64::NAN,
                            converged: false,
                            kkt_residual: f64::NAN,
                        }
                    }
                },
            )
            .collect();
        out.extend(points);
    }
    Ok(out)
}

/// Highest validation AU-PR; ties go to smaller `c3`, then smaller `ν`, then
/// `q` closest to 2.
pub fn select_best(points: &[GridPoint]) -> Option<&GridPoint> {
    points
        .iter()
        .filter(|p| p.val_au_pr.is_finite())
        .min_by(|a, b| {
            let (ha, hb) = (&a.hyperparams, &b.hyperparams);
            b.val_au_pr
                .total_cmp(&a.val_au_pr)
                .then(ha.c3.total_cmp(&hb.c3))
                .then(ha.nu.total_cmp(&hb.nu))
                .then((ha.q - 2.0).abs().total_cmp(&(hb.q - 2.0).abs()))
        })
}

/// Refit on every prepared window (train and validation parts).
pub fn fit_all(cfg: &RunConfig, prepared: &Prepared, hp: &HyperParams) -> Result<Fitted> {
    let idx = prepared.all_idx();
    let lap = prepared.laplacian(&idx, cfg.k_neighbours)?;
    fit(
        prepared.kernel,
        prepared.windows.windows(),
        &prepared.labels(&idx),
        &prepared.gram,
        &lap,
        hp,
        &cfg.solver,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub width: f64,
    pub static_width: f64,
    pub scale: f64,
    pub n_windows: usize,
    pub gram_min_eigenvalue: f64,
    /// One entry per `c3` of the grid, on the full training Gram matrix.
    pub c3: Vec<f64>,
    pub trace_gap: Vec<f64>,
    #[serde(rename = "min_eig_Q")]
    pub min_eig_q: Vec<f64>,
    pub positive_definite: bool,
    pub kkt_residual: f64,
    pub converged: bool,
    /// `max |Kβ − 2Q(y⊙ρ)|` of the final model.
    pub identity_residual: f64,
    pub grid: Vec<GridPoint>,
}

/// Everything needed to score new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub model: Model,
    pub scale: f64,
    pub window: usize,
    pub diagnostics: TrainDiagnostics,
}

impl ModelArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `max |Kβ − 2Q(y⊙ρ)|`.
pub fn identity_residual(
    k: &Matrix,
    q: &Matrix,
    beta: &[f64],
    rho: &[f64],
    labels: &Vector,
) -> f64 {
    let beta = Vector::from_column_slice(beta);
    let signed = Vector::from_column_slice(rho).component_mul(labels);
    (k * beta - q * signed * 2.0).amax()
}

/// Grid search, selection and refit on an in-memory training series.
pub fn train_series(cfg: &RunConfig, train: &RawSeries) -> Result<ModelArtifact> {
    let prepared = prepare(cfg, train)?;
    let grid = grid_search(cfg, &prepared, &cfg.c3_grid)?;
    let best = select_best(&grid)
        .ok_or_else(|| Error::InsufficientData("no grid point could be evaluated".into()))?
        .hyperparams;
    info!("selected {best:?}");
    let fitted = fit_all(cfg, &prepared, &best)?;
    if !fitted.solution.converged {
        warn!("final dual solve did not converge");
    }

    let idx = prepared.all_idx();
    let labels = prepared.labels(&idx);
    let lap = prepared.laplacian(&idx, cfg.k_neighbours)?;
    let k = &prepared.gram.entries;
    let mut trace_gap = Vec::new();
    let mut min_eig_q = Vec::new();
    let mut positive_definite = true;
    for &c3 in &cfg.c3_grid {
        let q = effective_kernel(k, &lap, c3)?;
        let report = verify_effective_kernel(k, &q.q, c3, &lap);
        positive_definite &= report.min_eigenvalue > 0.0;
        trace_gap.push(report.trace_gap);
        min_eig_q.push(report.min_eigenvalue);
    }
    let diagnostics = TrainDiagnostics {
        width: prepared.width,
        static_width: prepared.static_width,
        scale: prepared.scale,
        n_windows: prepared.windows.len(),
        gram_min_eigenvalue: prepared.gram.min_eigenvalue,
        c3: cfg.c3_grid.clone(),
        trace_gap,
        min_eig_q,
        positive_definite,
        kkt_residual: fitted.solution.kkt_residual,
        converged: fitted.solution.converged,
        identity_residual: identity_residual(
            k,
            &fitted.effective.q,
            &fitted.solution.beta,
            &fitted.solution.rho,
            &labels,
        ),
        grid,
    };
    Ok(ModelArtifact {
        model: fitted.model,
        scale: prepared.scale,
        window: cfg.window,
        diagnostics,
    })
}

/// Test windows with their kernel rows against a fixed set of model windows,
/// so that several models over the same windows score without recomputation.
#[derive(Debug, Clone)]
pub struct ScoredWindows {
    pub windows: WindowSet,
    /// `cross[(i, j)] = κ(test_i, model_j)`.
    pub cross: Matrix,
}

impl ScoredWindows {
    pub fn new(
        model: &Model,
        scale: f64,
        window_len: usize,
        stride: usize,
        test: &RawSeries,
    ) -> Result<Self> {
        if test.dim() != model.channels() {
            return Err(Error::DimensionMismatch {
                expected: model.channels(),
                got: test.dim(),
            });
        }
        let scaled = test.scaled(scale)?;
        let windows = window(&scaled, window_len, stride)?;
        let series = Path::new(scaled.values().to_vec(), scaled.len(), scaled.dim())?;
        let (cross, _) = model.kernel.sliding_cross(
            &series,
            window_len,
            stride,
            &model.windows,
            &model.self_kernels,
        )?;
        Ok(Self { windows, cross })
    }

    /// `d² − r² − offset` per window for a model over the same training windows.
    pub fn scores(&self, model: &Model) -> Vec<f64> {
        assert!(
            model.kernel.config.normalise,
            "cached scoring assumes a normalised kernel"
        );
        let beta = Vector::from_column_slice(&model.beta);
        let ones = vec![1.0; self.windows.len()];
        distances_from_kernel_rows(&self.cross, &ones, &beta, model.beta_k_beta)
            .iter()
            .map(|d| d - model.r2 - model.decision_offset)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Absent when the test series carries no labels.
    pub metrics: Option<Metrics>,
    pub confusion: Option<ConfusionMatrix>,
    pub diagnostics: ReportDiagnostics,
    pub selected_hyperparams: HyperParams,
    pub threshold: f64,
    pub per_window_scores: Vec<f64>,
    pub window_origins: Vec<usize>,
    pub window_labels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub c3: Vec<f64>,
    pub trace_gap: Vec<f64>,
    #[serde(rename = "min_eig_Q")]
    pub min_eig_q: Vec<f64>,
    pub kkt_residual: f64,
    pub converged: bool,
}

pub fn report_from_scores(
    artifact: &ModelArtifact,
    windows: &WindowSet,
    scores: Vec<f64>,
    threshold: f64,
    labelled: bool,
) -> Result<ScoreReport> {
    let (metrics, confusion) = if labelled {
        let r = eval::metrics_report(&[(&scores, windows.labels())], threshold)?;
        (Some(r.metrics), Some(r.confusion))
    } else {
        (None, None)
    };
    let d = &artifact.diagnostics;
    Ok(ScoreReport {
        metrics,
        confusion,
        diagnostics: ReportDiagnostics {
            c3: d.c3.clone(),
            trace_gap: d.trace_gap.clone(),
            min_eig_q: d.min_eig_q.clone(),
            kkt_residual: d.kkt_residual,
            converged: d.converged,
        },
        selected_hyperparams: artifact.model.hyperparams,
        threshold,
        per_window_scores: scores,
        window_origins: windows.origins().to_vec(),
        window_labels: windows.labels().to_vec(),
    })
}

/// Score every window of an in-memory test series.
pub fn score_series(
    cfg: &RunConfig,
    artifact: &ModelArtifact,
    test: &RawSeries,
) -> Result<ScoreReport> {
    let scored = ScoredWindows::new(
        &artifact.model,
        artifact.scale,
        artifact.window,
        cfg.stride,
        test,
    )?;
    let scores = scored.scores(&artifact.model);
    report_from_scores(
        artifact,
        &scored.windows,
        scores,
        cfg.threshold,
        test.point_labels().is_some(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub effective_kernel: EffectiveKernelReport,
    pub bound_k: f64,
    pub bound_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n_windows: usize,
    pub lambda: f64,
    pub gram_min_eigenvalue: f64,
    pub edges: usize,
    pub rows: Vec<DiagnosticsRow>,
}

/// Effective-kernel checks and complexity bounds for `c3 = 0` and every grid
/// value, on all prepared training windows.
pub fn diagnose_series(cfg: &RunConfig, train: &RawSeries) -> Result<DiagnosticsReport> {
    let prepared = prepare(cfg, train)?;
    let idx = prepared.all_idx();
    let graph = build_knn_graph(prepared.windows.windows(), cfg.k_neighbours, prepared.width)?;
    let lap = laplacian(&graph);
    debug_assert_eq!(lap.entries.nrows(), idx.len());
    let k = &prepared.gram.entries;
    let lambda = default_lambda_cap(k);
    let bound_k = rademacher_bound(lambda, k)?;
    let mut c3_values = vec![0.0];
    c3_values.extend(cfg.c3_grid.iter().copied().filter(|&c| c != 0.0));
    let rows = c3_values
        .iter()
        .map(|&c3| {
            let q = effective_kernel(k, &lap, c3)?;
            Ok(DiagnosticsRow {
                effective_kernel: verify_effective_kernel(k, &q.q, c3, &lap),
                bound_k,
                bound_q: rademacher_bound(lambda, &q.q)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        n_windows: idx.len(),
        lambda,
        gram_min_eigenvalue: prepared.gram.min_eigenvalue,
        edges: graph.edge_count(),
        rows,
    })
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    path.as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("config is missing `{what}`")))
}

fn load_train(cfg: &RunConfig) -> Result<RawSeries> {
    read_series(
        required(&cfg.train_data, "train_data")?,
        cfg.train_labels.as_ref(),
    )
}

/// Train from the configured CSV files.
pub fn run_train(cfg: &RunConfig) -> Result<ModelArtifact> {
    train_series(cfg, &load_train(cfg)?)
}

/// Score the configured test CSV with a trained model.
pub fn run_score(cfg: &RunConfig, artifact: &ModelArtifact) -> Result<ScoreReport> {
    let test = read_series(
        required(&cfg.test_data, "test_data")?,
        cfg.test_labels.as_ref(),
    )?;
    score_series(cfg, artifact, &test)
}

pub fn run_diagnostics(cfg: &RunConfig) -> Result<DiagnosticsReport> {
    diagnose_series(cfg, &load_train(cfg)?)
}
