//! Python bindings. Results come back as plain dicts and lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{NaiveDate, Utc};
use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;
use tagrec_core::engine::{
    borrowed_in, evaluate_history_run, sweep, CycleSettings, EngineError, EngineState, HistoryMode,
};
use tagrec_core::evaluate::{self, evaluate_feedback, standard_grid as core_grid, ConfusionCounts};
use tagrec_core::ingest::{IngestPaths, StopwordList};
use tagrec_core::preprocess::{self, NormalizerConfig};
use tagrec_core::profile::{Direction, IdfMode, ItemKind, ItemRef};
use tagrec_core::store::DataDir;
use tagrec_core::synth::{self, SynthConfig};
use tagrec_core::{GroupingConfig, Tag};

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            (None, None) => n.to_string().into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &v)
}

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn engine_err(e: EngineError) -> PyErr {
    match e {
        EngineError::UnknownUser(_)
        | EngineError::NotInList { .. }
        | EngineError::TagNotFound(_) => PyKeyError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn tag(s: &str) -> PyResult<Tag> {
    Tag::from_normalized(s).ok_or_else(|| value_err(format!("`{s}` is not a normalized tag")))
}

fn item_kind(s: &str) -> PyResult<ItemKind> {
    match s {
        "book" => Ok(ItemKind::Book),
        "document" => Ok(ItemKind::Document),
        other => Err(value_err(format!(
            "item_kind must be book or document, got `{other}`"
        ))),
    }
}

/// Normalized tag for one raw token, or None when it is filtered out.
#[pyfunction]
#[pyo3(signature = (raw, stopwords=None, min_token_length=2, preserved_characters="+#", stemming=false))]
fn normalize_token(
    raw: &str,
    stopwords: Option<Vec<String>>,
    min_token_length: usize,
    preserved_characters: &str,
    stemming: bool,
) -> PyResult<Option<String>> {
    let cfg = NormalizerConfig {
        stopwords: StopwordList::new(stopwords.unwrap_or_default()),
        min_token_length,
        preserved_characters: preserved_characters.to_string(),
        stemming_enabled: stemming,
        ..Default::default()
    };
    cfg.validate().map_err(value_err)?;
    Ok(preprocess::normalize_token(raw, &cfg)
        .ok()
        .map(|t| t.as_str().to_string()))
}

/// Sorted distinct tags of a text blob.
#[pyfunction]
#[pyo3(signature = (text, stopwords=None))]
fn extract_tags(text: &str, stopwords: Option<Vec<String>>) -> Vec<String> {
    let cfg = NormalizerConfig::with_stopwords(StopwordList::new(stopwords.unwrap_or_default()));
    preprocess::extract_tags(text, &cfg)
        .into_iter()
        .map(|t| t.as_str().to_string())
        .collect()
}

/// Cosine similarity of two tag -> weight maps.
#[pyfunction]
fn cosine(u: BTreeMap<String, f64>, v: BTreeMap<String, f64>) -> PyResult<f64> {
    let conv = |m: BTreeMap<String, f64>| -> PyResult<BTreeMap<Tag, f64>> {
        m.into_iter().map(|(k, w)| Ok((tag(&k)?, w))).collect()
    };
    Ok(tagrec_core::similarity::cosine_weights(
        &conv(u)?,
        &conv(v)?,
    ))
}

#[pyfunction]
fn precision(nrr: u64, nir: u64, nrn: u64) -> f64 {
    evaluate::precision(&ConfusionCounts { nrr, nir, nrn })
}

#[pyfunction]
fn recall(nrr: u64, nir: u64, nrn: u64) -> f64 {
    evaluate::recall(&ConfusionCounts { nrr, nir, nrn })
}

#[pyfunction]
fn f_score(p: f64, r: f64) -> f64 {
    evaluate::f_score(p, r)
}

/// `(p1, p2, m1, m2, m3)`.
type GridPoint = (f64, f64, usize, usize, usize);

/// The 25 (p1, p2, m1, m2, m3) points of the standard grid.
#[pyfunction]
fn standard_grid() -> Vec<GridPoint> {
    core_grid()
        .into_iter()
        .map(|g| (g.p1, g.p2, g.m1, g.m2, g.m3))
        .collect()
}

#[pyclass(module = "tagrec", skip_from_py_object)]
#[derive(Clone)]
struct Corpus {
    inner: tagrec_core::Corpus,
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    fn ingest(
        books: PathBuf,
        documents: PathBuf,
        loans: PathBuf,
        enrollments: PathBuf,
        stopwords: PathBuf,
    ) -> PyResult<Corpus> {
        let (inner, _) = tagrec_core::Corpus::ingest(&IngestPaths {
            books,
            documents,
            loans,
            enrollments,
            stopwords,
        })
        .map_err(value_err)?;
        Ok(Corpus { inner })
    }

    /// Seeded corpus with planted structure.
    #[staticmethod]
    #[pyo3(signature = (users=12, items=200, seed=42, cold_start_users=0))]
    fn synth(users: usize, items: usize, seed: u64, cold_start_users: usize) -> PyResult<Corpus> {
        let planted = synth::generate(&SynthConfig {
            users,
            items,
            seed,
            cold_start_users,
        })
        .map_err(value_err)?;
        Ok(Corpus {
            inner: planted.corpus,
        })
    }

    #[staticmethod]
    fn load(data_dir: PathBuf) -> PyResult<Corpus> {
        let inner = DataDir::new(data_dir)
            .load_corpus()
            .map_err(|e| PyOSError::new_err(e.to_string()))?;
        Ok(Corpus { inner })
    }

    fn save(&self, data_dir: PathBuf) -> PyResult<()> {
        DataDir::new(data_dir)
            .save_corpus(&self.inner)
            .map_err(|e| PyOSError::new_err(e.to_string()))
    }

    fn export_csv(&self, dir: PathBuf) -> PyResult<()> {
        self.inner
            .export_csv(&dir)
            .map(|_| ())
            .map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn n_books(&self) -> usize {
        self.inner.books.len()
    }

    #[getter]
    fn n_documents(&self) -> usize {
        self.inner.documents.len()
    }

    #[getter]
    fn n_loans(&self) -> usize {
        self.inner.loans.len()
    }

    #[getter]
    fn n_enrollments(&self) -> usize {
        self.inner.enrollments.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(books={}, documents={}, loans={}, enrollments={})",
            self.n_books(),
            self.n_documents(),
            self.n_loans(),
            self.n_enrollments()
        )
    }
}

/// A corpus with its feedback state and latest cycle.
#[pyclass(module = "tagrec")]
struct Engine {
    state: EngineState,
}

fn parse_date(s: Option<&str>) -> PyResult<Option<NaiveDate>> {
    s.map(|d| {
        d.parse()
            .map_err(|_| value_err(format!("`{d}` is not a YYYY-MM-DD date")))
    })
    .transpose()
}

#[pymethods]
impl Engine {
    #[new]
    fn new(corpus: &Corpus) -> Self {
        Engine {
            state: EngineState::new(corpus.inner.clone()),
        }
    }

    /// Runs a cycle and returns its summary.
    #[pyo3(signature = (
        p1=70.0, p2=40.0, m=(4, 5, 5), list_size=30, idf_mode="natural_log",
        window_days=518, similarity=0.95, as_of=None, include_titles=false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn run_cycle<'py>(
        &mut self,
        py: Python<'py>,
        p1: f64,
        p2: f64,
        m: (usize, usize, usize),
        list_size: usize,
        idf_mode: &str,
        window_days: u32,
        similarity: f64,
        as_of: Option<&str>,
        include_titles: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut settings = CycleSettings {
            as_of: parse_date(as_of)?,
            ..Default::default()
        };
        settings.grouping = GroupingConfig {
            list_size,
            ..GroupingConfig::new(p1, p2, [m.0, m.1, m.2])
        };
        settings.weighting.idf_mode = idf_mode.parse::<IdfMode>().map_err(value_err)?;
        settings.weighting.window_days = window_days;
        settings.cf.similarity_threshold = similarity;
        settings.text.include_titles = include_titles;
        let out = self.state.run_cycle(&settings).map_err(engine_err)?;
        serialize(py, &out.summary())
    }

    /// Every list of the latest cycle, keyed by user.
    fn lists<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let cycle = self
            .state
            .current
            .as_ref()
            .ok_or_else(|| engine_err(EngineError::NoCycle))?;
        serialize(py, &cycle.lists)
    }

    /// One user's list items, or None when the user got no list.
    fn list<'py>(&self, py: Python<'py>, user: &str) -> PyResult<Option<Bound<'py, PyAny>>> {
        self.state
            .list(user)
            .map(|l| serialize(py, &l.items))
            .transpose()
    }

    /// `{"relevant": {tag: weight}, "irrelevant": [tag, ...]}`.
    fn profile<'py>(&self, py: Python<'py>, user: &str) -> PyResult<Bound<'py, PyAny>> {
        let p = self
            .state
            .profile(user)
            .ok_or_else(|| engine_err(EngineError::UnknownUser(user.to_string())))?;
        let d = PyDict::new(py);
        d.set_item("relevant", serialize(py, &p.relevant.entries)?)?;
        d.set_item("irrelevant", serialize(py, &p.irrelevant.tags)?)?;
        Ok(d.into_any())
    }

    fn rate(&mut self, user: &str, item_id: &str, item_kind: &str, score: u8) -> PyResult<()> {
        let item = ItemRef {
            item_id: item_id.to_string(),
            item_kind: self::item_kind(item_kind)?,
        };
        self.state
            .rate(user, &item, score, Utc::now())
            .map_err(engine_err)
    }

    fn reallocate(&mut self, user: &str, tag: &str, direction: &str) -> PyResult<()> {
        let direction: Direction = direction.parse().map_err(value_err)?;
        self.state
            .reallocate(user, &self::tag(tag)?, direction)
            .map_err(engine_err)
    }

    fn matrix_csv(&self) -> PyResult<String> {
        let cycle = self
            .state
            .current
            .as_ref()
            .ok_or_else(|| engine_err(EngineError::NoCycle))?;
        Ok(cycle.profiles.matrix.to_csv_string())
    }

    /// History metrics of the latest cycle's settings.
    #[pyo3(signature = (held_out_from=None))]
    fn evaluate_history<'py>(
        &mut self,
        py: Python<'py>,
        held_out_from: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let settings = self.settings()?;
        let mode = mode(parse_date(held_out_from)?);
        let index = self.state.index(&settings.text).clone();
        let (counts, report) = evaluate_history_run(
            &self.state.corpus,
            &index,
            &self.state.feedback,
            &settings,
            mode,
        )
        .map_err(engine_err)?;
        let d = PyDict::new(py);
        d.set_item("counts", serialize(py, &counts)?)?;
        d.set_item("report", serialize(py, &report)?)?;
        Ok(d.into_any())
    }

    #[pyo3(signature = (relevance_cut=1))]
    fn evaluate_feedback<'py>(
        &self,
        py: Python<'py>,
        relevance_cut: u8,
    ) -> PyResult<Bound<'py, PyAny>> {
        let borrowed = borrowed_in(&self.state.corpus.loans, |_| true);
        let report = evaluate_feedback(&self.state.ratings(), &borrowed, relevance_cut)
            .map_err(value_err)?;
        serialize(py, &report)
    }

    /// Sweep rows for `grid` (tuples of p1, p2, m1, m2, m3), the standard
    /// grid by default.
    #[pyo3(signature = (grid=None, held_out_from=None))]
    fn sweep<'py>(
        &mut self,
        py: Python<'py>,
        grid: Option<Vec<GridPoint>>,
        held_out_from: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let settings = self.settings()?;
        let grid: Vec<GroupingConfig> = match grid {
            Some(g) => g
                .into_iter()
                .map(|(p1, p2, a, b, c)| GroupingConfig::new(p1, p2, [a, b, c]))
                .collect(),
            None => core_grid(),
        };
        let mode = mode(parse_date(held_out_from)?);
        let index = self.state.index(&settings.text).clone();
        let rows = sweep(
            &self.state.corpus,
            &index,
            &self.state.feedback,
            &settings,
            &grid,
            mode,
        )
        .map_err(engine_err)?;
        serialize(py, &rows)
    }
}

impl Engine {
    fn settings(&self) -> PyResult<CycleSettings> {
        Ok(self
            .state
            .current
            .as_ref()
            .map(|c| c.settings.clone())
            .unwrap_or_default())
    }
}

fn mode(split: Option<NaiveDate>) -> HistoryMode {
    split.map_or(HistoryMode::SameWindow, |split| HistoryMode::HeldOut {
        split,
    })
}

#[pymodule]
fn tagrec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_token, m)?)?;
    m.add_function(wrap_pyfunction!(extract_tags, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(precision, m)?)?;
    m.add_function(wrap_pyfunction!(recall, m)?)?;
    m.add_function(wrap_pyfunction!(f_score, m)?)?;
    m.add_function(wrap_pyfunction!(standard_grid, m)?)?;
    m.add_class::<Corpus>()?;
    m.add_class::<Engine>()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::types::PyAnyMethods;

    #[test]
    fn module_round_trip() {
        Python::attach(|py| {
            let m = PyModule::new(py, "tagrec").unwrap();
            tagrec(&m).unwrap();
            let tok: Option<String> = m
                .getattr("normalize_token")
                .unwrap()
                .call1(("Programação",))
                .unwrap()
                .extract()
                .unwrap();
            assert_eq!(tok.as_deref(), Some("programacao"));

            let corpus = Corpus::synth(3, 40, 7, 0).unwrap();
            let mut engine = Engine::new(&corpus);
            let summary = engine
                .run_cycle(
                    py,
                    70.0,
                    40.0,
                    (4, 5, 5),
                    30,
                    "natural_log",
                    518,
                    0.95,
                    None,
                    false,
                )
                .unwrap();
            let lists: usize = summary.get_item("lists").unwrap().extract().unwrap();
            assert_eq!(lists, 3);
            let rows = engine.sweep(py, None, None).unwrap();
            assert_eq!(rows.len().unwrap(), 25);
            assert!(engine
                .run_cycle(
                    py,
                    40.0,
                    70.0,
                    (4, 5, 5),
                    30,
                    "natural_log",
                    518,
                    0.95,
                    None,
                    false
                )
                .is_err());
        });
    }
}
