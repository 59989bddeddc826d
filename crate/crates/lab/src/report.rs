//! Report bundles and their emission to an output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::LabError;
use crate::io::{fmt_f64, json_text, write_text};
use crate::svg;

pub const SCHEMA_VERSION: u32 = 1;
pub const DIAGNOSTICS_HEADER: &str = "n,hausdorff_to_candidate,gauge,is_graph,fold_count,node_count,primitive_osc";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// A non-graph iterate was seen and the bidirectional detector stayed silent.
    ContrapositivePass,
    Inconclusive,
    NoData,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::ContrapositivePass => "CONTRAPOSITIVE_PASS",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::NoData => "NO_DATA",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass | Verdict::ContrapositivePass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive | Verdict::NoData => 2,
        }
    }
}

/// One row of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub n: i64,
    pub hausdorff_to_candidate: f64,
    pub gauge: f64,
    pub is_graph: bool,
    pub fold_count: usize,
    pub node_count: usize,
    pub primitive_osc: f64,
}

pub type Track = (String, Vec<(f64, f64)>);

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub command: String,
    pub verdict: Verdict,
    pub notes: Vec<String>,
    pub witness: Option<i64>,
    pub seed: u64,
    pub config: Value,
    pub records: Vec<DiagnosticsRecord>,
    /// Extra report fields, sorted by key.
    pub results: BTreeMap<String, Value>,
    /// Curves for the phase portrait, as wrapped `(q, p)` nodes.
    pub curves: Vec<Track>,
    /// Return-distance style series.
    pub series: Vec<Track>,
    pub defects: Vec<f64>,
    /// Additional files `(name, contents)`.
    pub files: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn empty(command: &str, config: Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            verdict: Verdict::NoData,
            notes: Vec::new(),
            witness: None,
            seed,
            config,
            records: Vec::new(),
            results: BTreeMap::new(),
            curves: Vec::new(),
            series: Vec::new(),
            defects: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(DIAGNOSTICS_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.n,
                fmt_f64(r.hausdorff_to_candidate),
                fmt_f64(r.gauge),
                r.is_graph,
                r.fold_count,
                r.node_count,
                fmt_f64(r.primitive_osc)
            );
        }
        s
    }

    pub fn report_json(&self) -> Result<String, LabError> {
        let mut doc = json!({
            "schema_version": SCHEMA_VERSION,
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "verdict": self.verdict.as_str(),
            "notes": self.notes,
            "witness": self.witness,
            "seed": self.seed,
            "config": self.config,
            "iterates": self.records.len(),
        });
        let obj = doc.as_object_mut().expect("object literal");
        obj.insert("results".into(), Value::Object(self.results.clone().into_iter().collect()));
        json_text(&doc)
    }
}

/// Writes `diagnostics.csv`, `report.json`, the plots and any extra files.
/// Returns the written paths in order.
pub fn emit_reports(bundle: &ReportBundle, outdir: &Path) -> Result<Vec<PathBuf>, LabError> {
    std::fs::create_dir_all(outdir).map_err(|e| LabError::io(outdir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<(), LabError> {
        let p = outdir.join(name);
        write_text(&p, text)?;
        written.push(p);
        Ok(())
    };
    put("diagnostics.csv", &bundle.diagnostics_csv())?;
    put("report.json", &bundle.report_json()?)?;
    if !bundle.curves.is_empty() {
        put("phase_portrait.svg", &svg::phase_portrait(&bundle.command, &bundle.curves))?;
    }
    if !bundle.series.is_empty() {
        put("return_distance.svg", &svg::series_plot(&bundle.command, "distance", &bundle.series, true))?;
    }
    if !bundle.defects.is_empty() {
        put("defect_histogram.svg", &svg::histogram(&bundle.command, "calibration defect", &bundle.defects, 40))?;
    }
    for (name, text) in &bundle.files {
        put(name, text)?;
    }
    Ok(written)
}
