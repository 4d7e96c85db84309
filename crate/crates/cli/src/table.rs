//! Plain-text views of the JSON reports.

use std::fmt::Write;

use mosi_core::metrics::{MosDatasetReport, MosiDatasetReport};

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn render(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "  {c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    for row in &rows {
        line(&mut out, row);
    }
    out
}

pub fn mos(report: &MosDatasetReport) -> String {
    let mut rows: Vec<Vec<String>> = report
        .sequences
        .iter()
        .map(|(name, r)| vec![name.clone(), cell(r.j), cell(r.f), cell(r.sr)])
        .collect();
    let d = &report.dataset;
    rows.push(vec!["mean".into(), cell(d.j_mean), cell(d.f_mean), cell(d.sr_mean)]);
    render(&["sequence", "J", "F", "SR"], rows)
}

pub fn mosi(report: &MosiDatasetReport) -> String {
    let mut rows: Vec<Vec<String>> = report
        .sequences
        .iter()
        .map(|(name, r)| {
            vec![
                name.clone(),
                cell(r.j_mov),
                cell(Some(r.fp_count)),
                cell(Some(r.mt_iou)),
            ]
        })
        .collect();
    let d = &report.dataset;
    rows.push(vec!["mean".into(), cell(d.j_mov), cell(d.fp_count), cell(d.mt_iou)]);
    render(&["sequence", "J_mov", "fp", "mtIoU"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_align() {
        let t = render(&["a", "bb"], vec![vec!["long".into(), "1".into()]]);
        assert_eq!(t, "a     bb\nlong   1\n");
    }
}
