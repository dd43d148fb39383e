//! Point-cloud files.
//!
//! CSV: optional `#` comment lines, a header `x1,...,xn,weight`, then one row
//! per point with every value printed to 17 significant digits. Metadata
//! (`n`, `d`, `label`, `seed`) lives in a TOML sidecar at `<csv>.meta`.
//! The JSON form carries the same fields in one document.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMeta {
    pub n: usize,
    pub d: f64,
    pub label: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct CloudJson {
    n: usize,
    d: f64,
    label: String,
    seed: u64,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn meta_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn meta_of(cloud: &PointCloud) -> CloudMeta {
    CloudMeta {
        n: cloud.ambient_dim(),
        d: cloud.target_dim(),
        label: cloud.label().to_string(),
        seed: cloud.seed(),
    }
}

/// CSV body for `cloud`, each line of `comment` prefixed with `# `.
pub fn to_csv_string(cloud: &PointCloud, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let header: Vec<String> = (1..=cloud.ambient_dim()).map(|k| format!("x{k}")).collect();
    let _ = writeln!(out, "{},weight", header.join(","));
    for (p, w) in cloud.points().zip(cloud.weights()) {
        for v in p {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        out.push_str(&fmt_f64(*w));
        out.push('\n');
    }
    out
}

pub fn meta_to_string(meta: &CloudMeta) -> Result<String> {
    toml::to_string(meta).map_err(|e| Error::Parse(e.to_string()))
}

/// Writes `path` and its `.meta` sidecar.
pub fn save_csv(cloud: &PointCloud, path: &Path, comment: Option<&str>) -> Result<()> {
    fs::write(path, to_csv_string(cloud, comment))?;
    fs::write(meta_path(path), meta_to_string(&meta_of(cloud))?)?;
    Ok(())
}

pub fn parse_csv(text: &str, meta: &CloudMeta) -> Result<PointCloud> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.last() != Some(&"weight") || columns.len() != meta.n + 1 {
        return Err(Error::Parse(format!(
            "header `{header}` does not match x1..x{},weight",
            meta.n
        )));
    }
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (row, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
        if vals.len() != meta.n + 1 {
            return Err(Error::Parse(format!("row {row}: expected {} fields", meta.n + 1)));
        }
        coords.extend_from_slice(&vals[..meta.n]);
        weights.push(vals[meta.n]);
    }
    PointCloud::from_flat(coords, weights, meta.n, meta.d, meta.label.clone(), meta.seed)
}

pub fn load_csv(path: &Path) -> Result<PointCloud> {
    let meta_text = fs::read_to_string(meta_path(path))?;
    let meta: CloudMeta = toml::from_str(&meta_text).map_err(|e| Error::Parse(e.to_string()))?;
    parse_csv(&fs::read_to_string(path)?, &meta)
}

pub fn to_json(cloud: &PointCloud) -> Result<String> {
    let doc = CloudJson {
        n: cloud.ambient_dim(),
        d: cloud.target_dim(),
        label: cloud.label().to_string(),
        seed: cloud.seed(),
        points: cloud.points().map(|p| p.to_vec()).collect(),
        weights: cloud.weights().to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(text: &str) -> Result<PointCloud> {
    let doc: CloudJson = serde_json::from_str(text)?;
    PointCloud::new(doc.points, doc.weights, doc.n, doc.d, doc.label, doc.seed)
}

/// Loads `.json` files as JSON, anything else as CSV plus sidecar.
pub fn load(path: &Path) -> Result<PointCloud> {
    if path.extension().is_some_and(|e| e == "json") {
        from_json(&fs::read_to_string(path)?)
    } else {
        load_csv(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_sphere, IfsSpec};
    use proptest::prelude::*;

    fn bits(c: &PointCloud) -> Vec<u64> {
        c.coords().iter().chain(c.weights()).map(|v| v.to_bits()).collect()
    }

    #[test]
    fn csv_round_trip_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cantor.csv");
        let cloud = IfsSpec::cantor().attractor(7).unwrap();
        save_csv(&cloud, &path, Some("generated\nfor a test")).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(bits(&cloud), bits(&back));
        assert_eq!(meta_of(&cloud), meta_of(&back));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# generated\n# for a test\nx1,weight\n"));
    }

    #[test]
    fn json_round_trip() {
        let cloud = sample_sphere(2, 4, 50, 3).unwrap();
        let back = from_json(&to_json(&cloud).unwrap()).unwrap();
        assert_eq!(cloud, back);
    }

    #[test]
    fn rejects_malformed() {
        let meta = CloudMeta { n: 2, d: 1.0, label: String::new(), seed: 0 };
        assert!(parse_csv("x1,weight\n1,2\n", &meta).is_err());
        assert!(parse_csv("x1,x2,weight\n1,2\n", &meta).is_err());
        assert!(parse_csv("x1,x2,weight\n1,2,abc\n", &meta).is_err());
        assert!(parse_csv("", &meta).is_err());
    }

    proptest! {
        #[test]
        fn csv_text_round_trip_is_bit_exact(
            raw in proptest::collection::vec((any::<f64>(), any::<f64>(), 0.0f64..1e300), 1..20)
        ) {
            let pts: Vec<Vec<f64>> = raw.iter()
                .map(|(a, b, _)| vec![if a.is_finite() { *a } else { 0.0 }, if b.is_finite() { *b } else { 1.0 }])
                .collect();
            let mut ws: Vec<f64> = raw.iter().map(|t| t.2).collect();
            ws[0] += 1.0;
            let cloud = PointCloud::new(pts, ws, 2, 1.5, "prop", 9).unwrap();
            let back = parse_csv(&to_csv_string(&cloud, None), &meta_of(&cloud)).unwrap();
            prop_assert_eq!(bits(&cloud), bits(&back));
        }
    }
}
