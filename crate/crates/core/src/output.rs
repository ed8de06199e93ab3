//! Run configuration and result files: CSV history, JSON manifest, SVG plot
//! and mesh snapshot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::driver::{DriverConfig, IterationRecord, RunOutcome, SolveAudit};
use crate::error::{Error, Result};
use crate::mesh::SimplexMesh;
use crate::nodes::NodeFamily;

pub const CONFIG_KEYS: [&str; 10] =
    ["problem", "family", "m", "tol", "theta_x", "theta_y", "vartheta", "estimate_period", "max_iter", "out"];

/// Flat `key = value` configuration; later entries override earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse(format!("line {}: expected key = value", no + 1)));
            };
            let key = k.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse(format!("line {}: unknown key '{}'", no + 1, k.trim())));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(RawConfig { entries })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn merge(&mut self, other: &RawConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }
}

/// A validated run configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: String,
    pub m: usize,
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub driver: DriverConfig,
}

impl RunConfig {
    /// Default tolerance of each model problem.
    pub fn default_tolerance(problem: &str) -> Option<f64> {
        match problem {
            "cookie" => Some(2e-2),
            "fourier" => Some(2e-3),
            _ => None,
        }
    }

    pub fn default_dim(problem: &str) -> Option<usize> {
        match problem {
            "cookie" => Some(8),
            "fourier" => Some(4),
            _ => None,
        }
    }

    /// Validate and fill defaults. Every violation is reported at once.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut bad = Vec::new();
        let get = |k: &str| raw.entries.get(k).map(String::as_str);
        fn num<T: std::str::FromStr>(bad: &mut Vec<String>, key: &str, v: Option<&str>) -> Option<T> {
            let v = v?;
            match v.parse() {
                Ok(x) => Some(x),
                Err(_) => {
                    bad.push(format!("{key}: cannot parse '{v}'"));
                    None
                }
            }
        }

        let problem = get("problem").unwrap_or("").to_string();
        if RunConfig::default_tolerance(&problem).is_none() {
            bad.push(format!("problem must be cookie or fourier, got '{problem}'"));
        }
        let family = match get("family") {
            None => {
                bad.push("family must be given explicitly (leja or cc)".into());
                None
            }
            Some(f) => match f.parse::<NodeFamily>() {
                Ok(f) => Some(f),
                Err(e) => {
                    bad.push(e.to_string());
                    None
                }
            },
        };
        let m = num::<usize>(&mut bad, "m", get("m")).or(RunConfig::default_dim(&problem)).unwrap_or(1);
        match problem.as_str() {
            "cookie" if !(1..=8).contains(&m) => bad.push(format!("m must lie in 1..=8 for cookie, got {m}")),
            "fourier" if m == 0 => bad.push("m must be at least 1".into()),
            _ => {}
        }
        let mut driver = DriverConfig::new(
            family.unwrap_or(NodeFamily::Leja),
            num(&mut bad, "tol", get("tol")).or(RunConfig::default_tolerance(&problem)).unwrap_or(1.0),
        );
        if let Some(v) = num(&mut bad, "theta_x", get("theta_x")) {
            driver.theta_x = v;
        }
        if let Some(v) = num(&mut bad, "theta_y", get("theta_y")) {
            driver.theta_y = v;
        }
        if let Some(v) = num(&mut bad, "vartheta", get("vartheta")) {
            driver.vartheta = v;
        }
        if let Some(v) = num(&mut bad, "estimate_period", get("estimate_period")) {
            driver.estimate_period = v;
        }
        if let Some(v) = num(&mut bad, "max_iter", get("max_iter")) {
            driver.max_iterations = v;
        }
        if let Err(Error::Config(more)) = driver.validate() {
            bad.extend(more);
        }
        if !bad.is_empty() {
            return Err(Error::Config(bad));
        }
        Ok(RunConfig { problem, m, out: get("out").map(PathBuf::from), driver })
    }
}

pub const CSV_HEADER: &str = "iter,type,dof,dof_total_vertices,mu_bar,tau_bar,mu,tau,eta,n_colpts,n_triangles,wall_ms";

/// C-style `%.12e`: two-digit signed exponent.
pub fn format_sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

pub fn csv_string(records: &[IterationRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.kind,
            r.dof,
            r.dof_total_vertices,
            format_sci(r.mu_bar),
            format_sci(r.tau_bar),
            format_sci(r.mu),
            format_sci(r.tau),
            format_sci(r.eta),
            r.n_colpts,
            r.n_triangles,
            format_sci(r.wall_ms)
        );
    }
    s
}

pub fn write_csv(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, csv_string(records))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse("unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(Error::Parse(format!("row {}: expected 12 fields, got {}", no + 1, f.len())));
        }
        let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", no + 1));
        let int = |k: usize, what: &str| f[k].parse::<usize>().map_err(|_| bad(what));
        let real = |k: usize, what: &str| f[k].parse::<f64>().map_err(|_| bad(what));
        out.push(IterationRecord {
            iter: int(0, "iter")?,
            kind: f[1].parse()?,
            dof: int(2, "dof")?,
            dof_total_vertices: int(3, "dof_total_vertices")?,
            mu_bar: real(4, "mu_bar")?,
            tau_bar: real(5, "tau_bar")?,
            mu: real(6, "mu")?,
            tau: real(7, "tau")?,
            eta: real(8, "eta")?,
            n_colpts: int(9, "n_colpts")?,
            n_triangles: int(10, "n_triangles")?,
            wall_ms: real(11, "wall_ms")?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    parse_csv(&fs::read_to_string(path)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunTotals {
    pub wall_ms: f64,
    pub iterations: usize,
    pub solves: SolveAudit,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest<'a> {
    /// Configuration entries exactly as supplied.
    pub input: &'a RawConfig,
    pub config: &'a RunConfig,
    pub status: crate::driver::RunStatus,
    pub error: Option<&'a str>,
    pub records: &'a [IterationRecord],
    pub totals: RunTotals,
}

pub fn manifest_json(raw: &RawConfig, config: &RunConfig, outcome: &RunOutcome, audit: &SolveAudit) -> Result<String> {
    let m = RunManifest {
        input: raw,
        config,
        status: outcome.status,
        error: outcome.error.as_deref(),
        records: &outcome.records,
        totals: RunTotals {
            wall_ms: outcome.records.iter().map(|r| r.wall_ms).sum(),
            iterations: outcome.records.len(),
            solves: audit.clone(),
        },
    };
    Ok(serde_json::to_string_pretty(&m)?)
}

struct Series<'a> {
    name: &'a str,
    color: &'a str,
    dashed: bool,
    pick: fn(&IterationRecord) -> f64,
}

const SERIES: [Series<'static>; 5] = [
    Series { name: "eta", color: "#000000", dashed: false, pick: |r| r.eta },
    Series { name: "mu", color: "#1f77b4", dashed: false, pick: |r| r.mu },
    Series { name: "tau", color: "#d62728", dashed: false, pick: |r| r.tau },
    Series { name: "mu_bar", color: "#1f77b4", dashed: true, pick: |r| r.mu_bar },
    Series { name: "tau_bar", color: "#d62728", dashed: true, pick: |r| r.tau_bar },
];

/// Log-log plot of the estimates against `dof`, as a standalone SVG document.
pub fn svg_plot(records: &[IterationRecord]) -> Result<String> {
    if records.len() < 2 {
        return Err(Error::Contract("a plot needs at least two records".into()));
    }
    let usable = |v: f64| v.is_finite() && v > 0.0;
    let xs: Vec<f64> = records.iter().map(|r| r.dof as f64).filter(|&x| usable(x)).collect();
    let ys: Vec<f64> =
        records.iter().flat_map(|r| SERIES.iter().map(move |s| (s.pick)(r))).filter(|&v| usable(v)).collect();
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Contract("no positive data to plot".into()));
    }
    let decades = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min).log10().floor() as i32;
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max).log10().ceil() as i32;
        (lo, hi.max(lo + 1))
    };
    let (x0, x1) = decades(&xs);
    let (y0, y1) = decades(&ys);
    let (w, h, left, right, top, bottom) = (640.0, 480.0, 70.0, 130.0, 20.0, 50.0);
    let px = |x: f64| left + (x.log10() - x0 as f64) / (x1 - x0) as f64 * (w - left - right);
    let py = |y: f64| top + (y1 as f64 - y.log10()) / (y1 - y0) as f64 * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let (pl, pr, pt, pb) = (left, w - right, top, h - bottom);
    let _ =
        writeln!(s, r#"<rect x="{pl}" y="{pt}" width="{}" height="{}" fill="none" stroke="black"/>"#, pr - pl, pb - pt);
    for k in x0..=x1 {
        let x = px(10f64.powi(k));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{pt}" x2="{x:.2}" y2="{pb}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text class="xtick" x="{x:.2}" y="{}" text-anchor="middle">1e{k}</text>"#, pb + 18.0);
    }
    for k in y0..=y1 {
        let y = py(10f64.powi(k));
        let _ = writeln!(s, r##"<line x1="{pl}" y1="{y:.2}" x2="{pr}" y2="{y:.2}" stroke="#dddddd"/>"##);
        let _ =
            writeln!(s, r#"<text class="ytick" x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"#, pl - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">dof</text>"#, (pl + pr) / 2.0, h - 10.0);
    for (i, ser) in SERIES.iter().enumerate() {
        let pts: Vec<String> = records
            .iter()
            .filter(|r| usable(r.dof as f64) && usable((ser.pick)(r)))
            .map(|r| format!("{:.2},{:.2}", px(r.dof as f64), py((ser.pick)(r))))
            .collect();
        if pts.is_empty() {
            continue;
        }
        let dash = if ser.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline class="series" id="{}" fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
            ser.name,
            ser.color,
            pts.join(" ")
        );
        let ly = pt + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{}</text>"#,
            pr + 10.0,
            pr + 35.0,
            ser.color,
            pr + 40.0,
            ly + 4.0,
            ser.name
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_svg_plot(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, svg_plot(records)?)?;
    Ok(())
}

pub fn snapshot_mesh(mesh: &SimplexMesh, path: impl AsRef<Path>) -> Result<()> {
    mesh.write_text(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::RefinementKind;

    fn record(i: usize, eta: f64) -> IterationRecord {
        IterationRecord {
            iter: i,
            kind: RefinementKind::Spatial,
            dof: 49 * (i + 1),
            dof_total_vertices: 81 * (i + 1),
            mu_bar: 2.0 * eta,
            tau_bar: 0.5 * eta,
            mu: 0.7 * eta,
            tau: 0.3 * eta,
            eta,
            n_colpts: i + 1,
            n_triangles: 128,
            wall_ms: 1.25,
        }
    }

    #[test]
    fn sci_format_matches_c() {
        assert_eq!(format_sci(0.0123), "1.230000000000e-02");
        assert_eq!(format_sci(1.0), "1.000000000000e+00");
        assert_eq!(format_sci(-2.5e120), "-2.500000000000e+120");
        assert_eq!(format_sci(f64::NAN), "nan");
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![record(0, 0.3)];
        let text = csv_string(&recs);
        assert_eq!(text.lines().count(), 2);
        let back = parse_csv(&text).unwrap();
        assert_eq!(csv_string(&back), text);
        assert!((back[0].eta - 0.3).abs() <= 1e-12 * 0.3);
        assert_eq!(back[0].kind, RefinementKind::Spatial);
    }

    #[test]
    fn config_validation_lists_violations() {
        let raw = RawConfig::parse("problem = cookie\n").unwrap();
        match RunConfig::from_raw(&raw) {
            Err(Error::Config(v)) => assert!(v.iter().any(|m| m.contains("family"))),
            other => panic!("unexpected {other:?}"),
        }
        let raw = RawConfig::parse("problem = cookie\nfamily = cc\ntheta_x = 1.5\n").unwrap();
        assert!(matches!(RunConfig::from_raw(&raw), Err(Error::Config(_))));
        let raw = RawConfig::parse("problem=cookie\nfamily=leja\n# comment\n").unwrap();
        let c = RunConfig::from_raw(&raw).unwrap();
        assert_eq!((c.m, c.driver.tolerance, c.driver.theta_x, c.driver.vartheta), (8, 2e-2, 0.3, 1.0));
        assert!(RawConfig::parse("bogus = 1").is_err());
        assert!(RawConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn svg_ticks_and_descending_series() {
        let recs: Vec<IterationRecord> = (0..5).map(|i| record(i, 1.0 / (i as f64 + 1.0).powi(2))).collect();
        let svg = svg_plot(&recs).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        for line in svg.lines().filter(|l| l.contains("tick")) {
            let label = line.split('>').nth(1).unwrap().split('<').next().unwrap();
            assert!(label.starts_with("1e"), "{label}");
        }
        let eta_line = svg.lines().find(|l| l.contains(r#"id="eta""#)).unwrap();
        let pts = eta_line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<f64> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap().parse().unwrap()).collect();
        // larger SVG y is lower on the page
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
        assert!(svg_plot(&recs[..1]).is_err());
    }
}
