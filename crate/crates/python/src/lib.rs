use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use gmem_core::harness::{self, Checkpoint, RunConfig};
use gmem_core::tasks::{self, Dataset as CoreDataset};
use gmem_core::training::Trainer;
use gmem_core::{GMemModel, GmemError, LoopOptions, MemoryMode, Tensor};

fn err(e: GmemError) -> PyErr {
    match e {
        GmemError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn mode(name: &str) -> PyResult<MemoryMode> {
    name.parse().map_err(err)
}

/// Synthetic episodes with a train and a test split.
#[pyclass]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// Generates the task described by `config` (flat `key = value` text).
    #[staticmethod]
    fn generate(config: &str) -> PyResult<Self> {
        let cfg = RunConfig::parse(config).map_err(err)?;
        let inner = tasks::generate_task(&cfg.task_config()).map_err(err)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Dataset {
            inner: harness::read_dataset(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(path, self.inner.to_text()).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __len__(&self) -> usize {
        self.inner.examples.len()
    }

    /// `(segments, answer_positions, answer_tokens, split)` of example `i`.
    fn example(&self, i: usize) -> PyResult<(Vec<Vec<usize>>, Vec<usize>, Vec<usize>, String)> {
        let e = self
            .inner
            .examples
            .get(i)
            .ok_or_else(|| PyValueError::new_err(format!("no example {i}")))?;
        Ok((
            e.segments.clone(),
            e.answer_positions.clone(),
            e.answer_tokens.clone(),
            e.split().unwrap_or("").to_string(),
        ))
    }
}

/// Frozen backbone plus trainable memory bank and injection.
#[pyclass]
struct Model {
    config: RunConfig,
    inner: GMemModel,
}

#[pymethods]
impl Model {
    /// Untrained model for `config`; the backbone is pretrained first when
    /// the config asks for it, using `dataset`'s training split.
    #[new]
    #[pyo3(signature = (config, dataset=None))]
    fn new(config: &str, dataset: Option<&Dataset>) -> PyResult<Self> {
        let cfg = RunConfig::parse(config).map_err(err)?;
        let corpus = dataset.map(|d| d.inner.split("train")).unwrap_or_default();
        let backbone = harness::build_backbone(&cfg, &corpus).map_err(err)?;
        let inner = harness::build_model(&cfg, backbone).map_err(err)?;
        Ok(Model { config: cfg, inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(err)?;
        let (config, inner) = harness::model_from_checkpoint(&ck).map_err(err)?;
        Ok(Model { config, inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        harness::checkpoint_of(&self.config, &self.inner, None)
            .save(&path)
            .map_err(err)
    }

    fn config(&self) -> String {
        self.config.to_text()
    }

    /// `(backbone, memory bank, all trainable)` parameter counts.
    fn param_counts(&self) -> (usize, usize, usize) {
        (
            self.inner.backbone.param_count(),
            self.inner.memory.param_count(),
            self.inner.trainable_param_count(),
        )
    }

    fn backbone_hash(&self) -> String {
        self.inner.backbone.weight_hash()
    }

    /// Backbone-only next-token logits for one segment.
    fn vanilla_logits(&self, tokens: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.inner.backbone.vanilla_logits(&tokens).map_err(err)?))
    }

    /// Runs an episode; returns per-segment logits, the final slots and the
    /// per-segment raw importance scores.
    #[pyo3(signature = (segments, memory="on"))]
    fn run_episode(
        &self,
        segments: Vec<Vec<usize>>,
        memory: &str,
    ) -> PyResult<(Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let options = LoopOptions {
            mode: mode(memory)?,
            ..LoopOptions::default()
        };
        let out = self.inner.run_episode(&segments, options).map_err(err)?;
        Ok((
            out.logits.iter().map(rows).collect(),
            rows(&out.final_memory.slots),
            out.scores.iter().map(|s| s.s.data().to_vec()).collect(),
        ))
    }

    /// `{"examples", "exact_match", "token_f1", "slot_entropy", "mean_abs_score"}`.
    #[pyo3(signature = (dataset, split="test", memory="on"))]
    fn evaluate(&self, dataset: &Dataset, split: &str, memory: &str) -> PyResult<Vec<(String, f64)>> {
        let r = harness::evaluate(&self.inner, &dataset.inner, split, mode(memory)?).map_err(err)?;
        let m = r.metrics;
        Ok(vec![
            ("examples".into(), m.examples as f64),
            ("exact_match".into(), m.exact_match),
            ("token_f1".into(), m.token_f1),
            ("slot_entropy".into(), m.slot_entropy),
            ("mean_abs_score".into(), m.mean_abs_score),
        ])
    }

    /// Trains for the configured number of steps on `dataset`'s training
    /// split; returns the metrics CSV rows.
    fn train(&mut self, dataset: &Dataset) -> PyResult<Vec<String>> {
        let examples = dataset.inner.split("train");
        let model = self.inner.clone();
        let mut trainer = Trainer::new(model, self.config.train.clone(), &examples).map_err(err)?;
        let log = trainer.run(|_, _| Ok(())).map_err(err)?;
        self.inner = trainer.into_model();
        Ok(log.iter().map(|m| m.csv_row()).collect())
    }
}

/// Default config text with one comment per key.
#[pyfunction]
fn default_config() -> String {
    RunConfig::defaults_text()
}

/// Finite-difference check of every trainable tensor on the smallest
/// config: `[(name, max_error, passed)]`.
#[pyfunction]
fn gradcheck() -> PyResult<Vec<(String, f64, bool)>> {
    let rows = harness::gradcheck(&harness::gradcheck_config(), false).map_err(err)?;
    Ok(rows.into_iter().map(|r| (r.name, r.max_error, r.passed)).collect())
}

/// Metrics CSV header matching `Model.train` rows.
#[pyfunction]
fn metrics_header() -> &'static str {
    gmem_core::training::METRICS_HEADER
}

#[pymodule]
fn gmem(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_header, m)?)?;
    Ok(())
}
