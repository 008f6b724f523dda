//! Weight-evolution tables and a static heatmap from a search history.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::search::{IterationRecord, SearchState};
use crate::{Error, Result};

pub const LONG_CSV: &str = "weights_long.csv";
pub const WIDE_CSV: &str = "weights_wide.csv";
pub const HEATMAP_SVG: &str = "weights_heatmap.svg";

/// Reads iteration records from a checkpoint or from a bare history array.
pub fn read_history(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    if let Ok(state) = serde_json::from_str::<SearchState>(&text) {
        return Ok(state.history);
    }
    serde_json::from_str::<Vec<IterationRecord>>(&text)
        .map_err(|e| Error::Data(format!("{}: not a search history: {e}", path.display())))
}

fn check(history: &[IterationRecord]) -> Result<usize> {
    let first = history
        .first()
        .ok_or_else(|| Error::EmptyResult("history has no iterations".into()))?;
    let k = first.best_weights.len();
    if history.iter().any(|h| h.best_weights.len() != k) {
        return Err(Error::Data("history mixes cluster counts".into()));
    }
    Ok(k)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per (iteration, cluster) with the best-so-far mixture's weight.
pub fn long_csv(history: &[IterationRecord]) -> Result<String> {
    check(history)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "cluster", "weight", "best_so_far"])
        .map_err(csv_error)?;
    for h in history {
        for (c, x) in h.best_weights.iter().enumerate() {
            w.write_record([
                h.iteration.to_string(),
                c.to_string(),
                x.to_string(),
                h.best_so_far.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    finish(w)
}

/// One row per iteration: best-so-far value followed by every cluster weight.
pub fn wide_csv(history: &[IterationRecord]) -> Result<String> {
    let k = check(history)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iteration".to_string(), "best_so_far".to_string()];
    header.extend((0..k).map(|c| format!("w{c}")));
    w.write_record(&header).map_err(csv_error)?;
    for h in history {
        let mut row = vec![h.iteration.to_string(), h.best_so_far.to_string()];
        row.extend(h.best_weights.iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

const CELL_W: usize = 56;
const CELL_H: usize = 22;
const LEFT: usize = 80;
const TOP: usize = 40;

/// Linear white-to-blue ramp.
fn shade(x: f64) -> String {
    let t = x.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// Clusters down, iterations across; cell darkness is proportional to weight.
pub fn heatmap_svg(history: &[IterationRecord]) -> Result<String> {
    let k = check(history)?;
    let cols = history.len();
    let width = LEFT + cols * CELL_W + 20;
    let height = TOP + k * CELL_H + 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="16" font-size="13">Best mixture weight per cluster by iteration</text>"#
    );
    for (j, h) in history.iter().enumerate() {
        let x = LEFT + j * CELL_W + CELL_W / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">iter {}</text>"#,
            TOP - 6,
            h.iteration
        );
    }
    for c in 0..k {
        let y = TOP + c * CELL_H;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">cluster {c}</text>"#,
            LEFT - 6,
            y + CELL_H / 2 + 4
        );
        for (j, h) in history.iter().enumerate() {
            let w = h.best_weights[c];
            let x = LEFT + j * CELL_W;
            let ink = if w > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}" stroke="#cccccc"><title>iteration {} cluster {c}: {w}</title></rect>"##,
                shade(w),
                h.iteration
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{w:.3}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes both CSV tables and the heatmap into `dir`; returns the paths.
pub fn write_report(history: &[IterationRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        (LONG_CSV, long_csv(history)?),
        (WIDE_CSV, wide_csv(history)?),
        (HEATMAP_SVG, heatmap_svg(history)?),
    ];
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut paths = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::file(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_pool, DirichletPrior};

    fn history(iters: usize, k: usize) -> Vec<IterationRecord> {
        let prior = DirichletPrior::from_token_totals(&vec![1; k], 1.0).unwrap();
        let pool = sample_pool(&prior, iters, 0.02, 5).unwrap().candidates;
        pool.into_iter()
            .enumerate()
            .map(|(i, w)| IterationRecord {
                iteration: i + 1,
                budget: 4,
                pool_seed: 0,
                pool_size: 0,
                excluded: 0,
                top_n: vec![],
                chosen: vec![],
                evaluated: 4,
                failed: 0,
                iteration_best: i as f64,
                best_so_far: i as f64 * 0.5,
                best_weights: w,
                predictor_trees: 0,
            })
            .collect()
    }

    fn rows(text: &str) -> Vec<Vec<String>> {
        csv::Reader::from_reader(text.as_bytes())
            .records()
            .map(|r| r.unwrap().iter().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn long_table_has_one_row_per_cell() {
        let h = history(3, 21);
        let r = rows(&long_csv(&h).unwrap());
        assert_eq!(r.len(), 63);
        for it in 1..=3 {
            let sum: f64 = r
                .iter()
                .filter(|row| row[0] == it.to_string())
                .map(|row| row[2].parse::<f64>().unwrap())
                .sum();
            assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn wide_rows_sum_to_one() {
        let h = history(4, 6);
        let r = rows(&wide_csv(&h).unwrap());
        assert_eq!(r.len(), 4);
        for row in r {
            let sum: f64 = row[2..].iter().map(|x| x.parse::<f64>().unwrap()).sum();
            assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn heatmap_has_a_cell_per_weight() {
        let h = history(3, 5);
        let svg = heatmap_svg(&h).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect x=").count(), 15);
        assert_eq!(shade(0.0), "#ffffff");
        assert_eq!(shade(1.0), "#08306b");
    }

    #[test]
    fn empty_history_is_rejected() {
        assert!(matches!(long_csv(&[]), Err(Error::EmptyResult(_))));
        assert!(matches!(heatmap_svg(&[]), Err(Error::EmptyResult(_))));
    }

    #[test]
    fn reads_bare_history_and_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let h = history(2, 3);
        let p = dir.path().join("history.json");
        fs::write(&p, serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(read_history(&p).unwrap(), h);
        let files = write_report(&h, &dir.path().join("out")).unwrap();
        assert!(files.iter().all(|f| f.exists()));
        fs::write(&p, "[1, 2]").unwrap();
        assert!(read_history(&p).is_err());
    }
}
