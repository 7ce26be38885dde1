use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn with_module(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>)) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "meo").unwrap();
        meo::register(&m).unwrap();
        f(py, &m);
    });
}

#[test]
fn functions_round_trip_python_values() {
    with_module(|_py, m| {
        let toks: Vec<String> = m.getattr("tokenize").unwrap().call1(("Québec BUDGET",)).unwrap().extract().unwrap();
        assert_eq!(toks, ["québec", "budget"]);
        let edges = vec![("a", "b", 1.0), ("b", "a", 1.0)];
        let pr: std::collections::BTreeMap<String, f64> = m.getattr("pagerank").unwrap().call1((edges,)).unwrap().extract().unwrap();
        assert!((pr["a"] - 0.5).abs() < 1e-12);
        let cell: String = m.getattr("render_cell").unwrap().call1((10u64, 2u64)).unwrap().extract().unwrap();
        assert_eq!(cell, "10 (5)");
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, m| {
        let err = m.getattr("temporal_match").unwrap().call1((vec![1.0; 4], vec![1.0; 4], 1u32)).unwrap_err();
        assert!(err.is_instance(py, &m.getattr("MeoError").unwrap()));
        let err = m.getattr("pagerank").unwrap().call1((Vec::<(String, String, f64)>::new(),)).unwrap_err();
        assert!(err.is_instance(py, &m.getattr("MeoError").unwrap()));
        let bad = vec![("a", "b", -1.0)];
        let err = m.getattr("detect_communities").unwrap().call1((bad,)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}

#[test]
fn observatory_over_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    with_module(|py, m| {
        let obs = m.getattr("Observatory").unwrap().call1((dir.path(),)).unwrap();
        assert_eq!(obs.len().unwrap(), 0);
        let report = obs.call_method1("import_seeds", ("id,name,main_type,sub_type,federal_party,provincial_party,province,riding,country,platform,handle,verified,followers,following,collection_tags\nn1,Paper,news,national,,,ON,,CA,tiktok,paper_tt,true,,,\n",)).unwrap();
        let report = report.cast::<PyDict>().unwrap();
        assert_eq!(report.get_item("accepted").unwrap().unwrap().extract::<usize>().unwrap(), 1);
        assert_eq!(report.get_item("rejected").unwrap().unwrap().cast::<PyList>().unwrap().len(), 0);
        let gaps: Vec<(String, String)> =
            obs.call_method1("detect_gaps", ("tiktok", "paper_tt", "2024-01-01", "2024-01-05")).unwrap().extract().unwrap();
        assert_eq!(gaps, [("2024-01-01".to_string(), "2024-01-05".to_string())]);
        assert!(obs.call_method1("detect_gaps", ("myspace", "x", "2024-01-01", "2024-01-05")).is_err());
        let _ = py;
    });
}
