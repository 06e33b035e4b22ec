//! Text renderings of matrices and score reports. Every function returns a
//! string so the same inputs always give the same bytes.

use std::fmt::Write as _;

use anyplay_core::xplay::{CrossPlayMatrix, Score, ScoreReport, SCORE_NAMES};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("utf-8 input")
}

fn matrix_csv(matrix: &CrossPlayMatrix, cell: impl Fn(usize, usize) -> f64) -> String {
    let mut rows = Vec::with_capacity(matrix.size() + 1);
    let mut header = vec!["p1\\p2".to_string()];
    header.extend(matrix.labels.iter().cloned());
    rows.push(header);
    for (i, label) in matrix.labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend((0..matrix.size()).map(|j| format!("{}", cell(i, j))));
        rows.push(row);
    }
    csv_string(rows)
}

/// Cell means; rows are Player 1 providers, columns Player 2 providers.
pub fn means_csv(matrix: &CrossPlayMatrix) -> String {
    matrix_csv(matrix, |i, j| matrix.cells[i][j].mean)
}

pub fn stderr_csv(matrix: &CrossPlayMatrix) -> String {
    matrix_csv(matrix, |i, j| matrix.cells[i][j].stderr)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v}"))
}

/// One row per label with the four score means, `NA` where undefined.
pub fn scores_csv(report: &ScoreReport) -> String {
    let mut rows = vec![std::iter::once("label").chain(SCORE_NAMES).map(String::from).collect::<Vec<_>>()];
    for r in &report.rows {
        let mut row = vec![r.label.clone()];
        row.extend(r.means().iter().map(|&v| fmt_opt(v)));
        rows.push(row);
    }
    csv_string(rows)
}

pub fn pearson_csv(names: &[String], matrix: &[Vec<Option<f64>>]) -> String {
    let mut rows = vec![std::iter::once(String::new()).chain(names.iter().cloned()).collect::<Vec<_>>()];
    for (name, values) in names.iter().zip(matrix) {
        let mut row = vec![name.clone()];
        row.extend(values.iter().map(|&v| fmt_opt(v)));
        rows.push(row);
    }
    csv_string(rows)
}

pub fn report_pearson_csv(report: &ScoreReport) -> String {
    let names: Vec<String> = SCORE_NAMES.iter().map(|s| s.to_string()).collect();
    pearson_csv(&names, &report.pearson)
}

/// Fixed-width score table with `mean ± stderr` cells and `N/A` where a
/// score is undefined.
pub fn score_table(report: &ScoreReport) -> String {
    let headers = ["Method", "SP", "Intra-XP", "Inter-XP", "1SZSC-XP"];
    let cell = |s: Option<Score>| s.map_or_else(|| "N/A".to_string(), |s| format!("{:.2} ± {:.2}", s.mean, s.stderr));
    let body: Vec<[String; 5]> = report
        .rows
        .iter()
        .map(|r| [r.label.clone(), cell(r.sp), cell(r.intra_xp), cell(r.inter_xp), cell(r.one_szsc_xp)])
        .collect();
    let mut widths = headers.map(|h| h.chars().count());
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                let pad = " ".repeat(w - c.chars().count());
                if i == 0 { format!("{c}{pad}") } else { format!("{pad}{c}") }
            })
            .collect();
        format!("{}\n", padded.join("  ").trim_end())
    };
    let mut out = line(&headers.map(String::from));
    out.push_str(&line(&widths.map(|w| "-".repeat(w))));
    for row in &body {
        out.push_str(&line(row));
    }
    out
}

/// Column names and their values, `None` where the table says `NA`.
pub type ScoreColumns = (Vec<String>, Vec<Vec<Option<f64>>>);

/// Parses a score table: a header row, then one row per label whose first
/// column is the label and the rest are numbers or `NA`.
pub fn parse_score_table(text: &str) -> Result<ScoreColumns, ReportError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(ReportError::Parse { line: 1, msg: "need a label column and at least one score column".into() });
    }
    let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
    let mut columns = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(ReportError::Parse { line, msg: format!("expected {} fields, found {}", headers.len(), record.len()) });
        }
        for (col, field) in columns.iter_mut().zip(record.iter().skip(1)) {
            let v = match field {
                "NA" | "N/A" | "" => None,
                f => Some(f.parse::<f64>().map_err(|_| ReportError::Parse { line, msg: format!("bad number `{f}`") })?),
            };
            col.push(v);
        }
    }
    Ok((names, columns))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const LOW: [f64; 3] = [24.0, 24.0, 48.0];
const HIGH: [f64; 3] = [250.0, 222.0, 60.0];

/// Color at position `t` in `[0, 1]` of the low-to-high ramp.
fn ramp(t: f64) -> (String, &'static str) {
    let c: Vec<u8> = LOW.iter().zip(HIGH).map(|(lo, hi)| (lo + (hi - lo) * t).round() as u8).collect();
    let text = if t < 0.5 { "#ffffff" } else { "#000000" };
    (format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]), text)
}

/// Heatmap of cell means with a linear color scale from the matrix minimum
/// to its maximum. A constant matrix is drawn entirely in the high color.
pub fn heatmap_svg(matrix: &CrossPlayMatrix, title: &str) -> String {
    const CELL: usize = 44;
    const LEFT: usize = 110;
    const TOP: usize = 70;
    let p = matrix.size();
    let (lo, hi) = matrix.min_max();
    let width = LEFT + p * CELL + 20;
    let height = TOP + p * CELL + 40;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(s, "<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>");
    let _ = writeln!(s, "<text x=\"{LEFT}\" y=\"22\" font-size=\"14\">{}</text>", xml_escape(title));
    let _ = writeln!(
        s,
        "<text x=\"{LEFT}\" y=\"40\" font-size=\"11\">rows: Player 1, columns: Player 2; scale {lo:.1} to {hi:.1}</text>"
    );
    for (j, label) in matrix.labels.iter().enumerate() {
        let x = LEFT + j * CELL + CELL / 2;
        let _ = writeln!(
            s,
            "<text x=\"{x}\" y=\"{}\" font-size=\"9\" text-anchor=\"middle\">{}</text>",
            TOP - 6,
            xml_escape(label)
        );
    }
    for (i, label) in matrix.labels.iter().enumerate() {
        let y = TOP + i * CELL;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\">{}</text>",
            LEFT - 6,
            y + CELL / 2 + 3,
            xml_escape(label)
        );
        for j in 0..p {
            let mean = matrix.cells[i][j].mean;
            let t = if hi > lo { (mean - lo) / (hi - lo) } else { 1.0 };
            let (fill, ink) = ramp(t);
            let x = LEFT + j * CELL;
            let shown = if mean.abs() < 0.05 { 0.0 } else { mean };
            let _ = writeln!(s, "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"#808080\" stroke-width=\"0.5\"/>");
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" fill=\"{ink}\">{shown:.1}</text>",
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
