//! Python bindings. Layouts, manifests and reports cross the boundary as
//! JSON strings; images and masks as `bytes` in their file formats.

use std::path::PathBuf;

use oscr_core::binding::{layout_attention_mask, summarize_mask, DEFAULT_PATCH_PX};
use oscr_core::metrics::{angular_error_deg, evaluate as evaluate_core, EstimatesFile, EvalConfig};
use oscr_core::procgen::{self, GenConfig, Manifest};
use oscr_core::render::{render_oscr, visibility_ratio, RenderOptions, RenderOutput};
use oscr_core::scene::{validate_layout, SceneLayout};
use oscr_core::scores::ScoresFile;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

create_exception!(oscr, OscrError, PyValueError, "Raised for every error reported by the core library.");

fn err(e: oscr_core::Error) -> PyErr {
    OscrError::new_err(format!("{}: {e}", e.kind()))
}

fn json_err(e: serde_json::Error) -> PyErr {
    OscrError::new_err(format!("json: {e}"))
}

fn gen_config(config_json: Option<&str>) -> PyResult<GenConfig> {
    match config_json {
        Some(t) => serde_json::from_str(t).map_err(json_err),
        None => Ok(GenConfig::default()),
    }
}

#[pyclass(name = "Layout", module = "oscr", from_py_object)]
#[derive(Clone)]
struct PyLayout {
    inner: SceneLayout,
}

#[pymethods]
impl PyLayout {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        SceneLayout::from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn prompt(&self) -> String {
        self.inner.prompt.clone()
    }

    #[getter]
    fn box_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.inner.boxes.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids
    }

    /// Human-readable validation problems; empty when the layout is valid.
    fn violations(&self) -> Vec<String> {
        validate_layout(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    #[pyo3(signature = (alpha = 0.5))]
    fn render(&self, py: Python<'_>, alpha: f64) -> PyResult<PyRender> {
        let layout = self.inner.clone();
        let out = py
            .detach(move || render_oscr(&layout, &RenderOptions::default().with_alpha(alpha)))
            .map_err(err)?;
        Ok(PyRender { inner: out })
    }

    /// Returns the packed mask file contents and a JSON summary.
    #[pyo3(signature = (patch = DEFAULT_PATCH_PX, personalize = Vec::new(), n_appearance = 0))]
    fn attention_mask<'py>(
        &self,
        py: Python<'py>,
        patch: u32,
        personalize: Vec<u32>,
        n_appearance: usize,
    ) -> PyResult<(Bound<'py, PyBytes>, String)> {
        let (mask, tokens) = layout_attention_mask(&self.inner, patch, &personalize, n_appearance).map_err(err)?;
        let bytes = mask.to_bytes().map_err(err)?;
        let summary = serde_json::to_string(&summarize_mask(&mask, &tokens.sectors())).map_err(json_err)?;
        Ok((PyBytes::new(py, &bytes), summary))
    }

    fn __repr__(&self) -> String {
        format!("Layout(prompt={:?}, boxes={})", self.inner.prompt, self.inner.boxes.len())
    }
}

#[pyclass(name = "Render", module = "oscr", frozen)]
struct PyRender {
    inner: RenderOutput,
}

impl PyRender {
    fn index(&self, box_id: u32) -> PyResult<usize> {
        self.inner.index_of(box_id).ok_or_else(|| err(oscr_core::Error::UnknownBox(box_id)))
    }
}

#[pymethods]
impl PyRender {
    #[getter]
    fn width(&self) -> u32 {
        self.inner.oscr.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.oscr.height
    }

    #[getter]
    fn box_ids(&self) -> Vec<u32> {
        self.inner.box_ids().to_vec()
    }

    fn oscr_png<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.inner.oscr.to_png().map_err(err)?))
    }

    /// Row-major 8-bit RGB samples.
    fn oscr_rgb8<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.oscr.to_rgb8())
    }

    fn amodal_png<'py>(&self, py: Python<'py>, box_id: u32) -> PyResult<Bound<'py, PyBytes>> {
        let i = self.index(box_id)?;
        Ok(PyBytes::new(py, &self.inner.amodal_masks[i].to_png().map_err(err)?))
    }

    fn visible_png<'py>(&self, py: Python<'py>, box_id: u32) -> PyResult<Bound<'py, PyBytes>> {
        let i = self.index(box_id)?;
        Ok(PyBytes::new(py, &self.inner.visible_masks[i].to_png().map_err(err)?))
    }

    fn depth_pfm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.depth.to_pfm())
    }

    fn visibility(&self, box_id: u32) -> PyResult<f64> {
        visibility_ratio(&self.inner, box_id).map_err(err)
    }

    /// `{box_id: visible / amodal}`; boxes without pixels map to `None`.
    fn visibilities<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for &id in self.inner.box_ids() {
            d.set_item(id, visibility_ratio(&self.inner, id).ok())?;
        }
        Ok(d)
    }

    fn meta_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.meta).map_err(json_err)
    }
}

#[pyfunction]
#[pyo3(signature = (seed, index = 0, config_json = None))]
fn sample_scene(seed: u64, index: u64, config_json: Option<&str>) -> PyResult<PyLayout> {
    let cfg = gen_config(config_json)?;
    cfg.validate().map_err(err)?;
    Ok(PyLayout {
        inner: procgen::sample_scene(&cfg, &mut procgen::scene_rng(seed, index)),
    })
}

/// Collision, size and visibility filters; returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (layout, config_json = None))]
fn evaluate_candidate(py: Python<'_>, layout: PyLayout, config_json: Option<&str>) -> PyResult<String> {
    let cfg = gen_config(config_json)?;
    let (report, _) = py.detach(|| procgen::evaluate_candidate(&cfg, &layout.inner)).map_err(err)?;
    serde_json::to_string(&report).map_err(json_err)
}

#[pyfunction]
fn check_collision(layout: PyLayout, a: u32, b: u32) -> PyResult<bool> {
    let get = |id| layout.inner.box_by_id(id).ok_or_else(|| err(oscr_core::Error::UnknownBox(id)));
    Ok(procgen::check_collision(get(a)?, get(b)?))
}

/// Writes a dataset under `out_dir` and returns the manifest JSON.
#[pyfunction]
#[pyo3(signature = (out_dir, config_json = None))]
fn generate_dataset(py: Python<'_>, out_dir: PathBuf, config_json: Option<&str>) -> PyResult<String> {
    let cfg = gen_config(config_json)?;
    let m = py.detach(|| procgen::generate_dataset(&cfg, &out_dir)).map_err(err)?;
    m.to_json().map_err(err)
}

#[pyfunction]
fn dataset_stats(manifest_json: &str) -> PyResult<String> {
    let m: Manifest = serde_json::from_str(manifest_json).map_err(json_err)?;
    serde_json::to_string(&procgen::dataset_stats(&m).map_err(err)?).map_err(json_err)
}

#[pyfunction]
#[pyo3(signature = (manifest_json, scores_json, threshold = 0.25))]
fn filter_augmentations(manifest_json: &str, scores_json: &str, threshold: f64) -> PyResult<String> {
    let m: Manifest = serde_json::from_str(manifest_json).map_err(json_err)?;
    let scores = ScoresFile::parse(scores_json, "scores").map_err(err)?;
    procgen::filter_augmentations(&m, &scores, threshold).to_json().map_err(err)
}

/// Degrees in, degrees out.
#[pyfunction]
#[pyo3(signature = (gt, est, relaxed = false))]
fn angular_error(gt: f64, est: f64, relaxed: bool) -> f64 {
    angular_error_deg(gt, est, relaxed)
}

/// Scores estimates against a manifest's ground truth; returns the report JSON.
#[pyfunction]
#[pyo3(signature = (manifest_json, estimates_json, scores_json = None, threshold = 0.25))]
fn evaluate(manifest_json: &str, estimates_json: &str, scores_json: Option<&str>, threshold: f64) -> PyResult<String> {
    let m: Manifest = serde_json::from_str(manifest_json).map_err(json_err)?;
    let est = EstimatesFile::parse(estimates_json, "estimates").map_err(err)?;
    let scores = scores_json.map(|s| ScoresFile::parse(s, "scores")).transpose().map_err(err)?;
    let cfg = EvalConfig {
        objectness_threshold: Some(threshold),
    };
    let report = evaluate_core(&m.ground_truth(), &est, scores.as_ref(), &cfg).map_err(err)?;
    serde_json::to_string(&report).map_err(json_err)
}

#[pymodule]
fn oscr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("OscrError", m.py().get_type::<OscrError>())?;
    m.add_class::<PyLayout>()?;
    m.add_class::<PyRender>()?;
    m.add_function(wrap_pyfunction!(sample_scene, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_candidate, m)?)?;
    m.add_function(wrap_pyfunction!(check_collision, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_stats, m)?)?;
    m.add_function(wrap_pyfunction!(filter_augmentations, m)?)?;
    m.add_function(wrap_pyfunction!(angular_error, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
