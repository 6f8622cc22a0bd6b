use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use super::metrics::Outcome;
use super::store::Corpus;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCell {
    pub code: u16,
    pub outcome: Outcome,
    /// Trace file relative to the corpus root.
    pub trace_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridRow {
    pub target: String,
    /// Aligned with [`Grid::scenarios`]; `None` where no trace exists.
    pub cells: Vec<Option<GridCell>>,
}

impl GridRow {
    pub fn count(&self, outcome: Outcome) -> usize {
        self.cells.iter().flatten().filter(|c| c.outcome == outcome).count()
    }
}

/// Scenario × target matrix of error codes for one run date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub date: String,
    pub scenarios: Vec<String>,
    pub rows: Vec<GridRow>,
}

pub fn render_grid(corpus: &Corpus, date: &str) -> Grid {
    let mut scenarios: Vec<String> = corpus.on_date(date).map(|e| e.trace.scenario.clone()).collect();
    scenarios.sort();
    scenarios.dedup();
    let mut targets: Vec<String> = corpus.on_date(date).map(|e| e.trace.target.name.clone()).collect();
    targets.sort();
    targets.dedup();
    let rows = targets
        .into_iter()
        .map(|target| {
            let cells = scenarios
                .iter()
                .map(|scenario| {
                    corpus.get(date, &target, scenario).map(|e| GridCell {
                        code: e.trace.error_code,
                        outcome: Outcome::of(e.trace.error_code),
                        trace_path: e.path.clone(),
                    })
                })
                .collect();
            GridRow { target, cells }
        })
        .collect();
    Grid { date: date.to_string(), scenarios, rows }
}

pub(crate) fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn outcome_class(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Success => "success",
        Outcome::Failure => "failure",
        Outcome::Error => "error",
    }
}

const STYLE: &str = "body{font-family:sans-serif;margin:1.5em}\
table{border-collapse:collapse}\
th,td{border:1px solid #999;padding:.3em .6em;text-align:center}\
td.success{background:#9be29b}td.failure{background:#f29b9b}\
td.error{background:#f5d58a}td.missing{background:#eee}\
td a{color:#000}";

impl Grid {
    /// A self-contained page. Cell links are relative to the corpus root,
    /// so the page belongs there. With `pages`, each cell also links the
    /// rendered trace page next to the JSON file.
    pub fn to_html(&self, pages: bool) -> String {
        let mut html = String::new();
        let title = format!("Results grid {}", escape_html(&self.date));
        let _ = write!(
            html,
            "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title>\
             <style>{STYLE}</style></head><body>\n<h1>{title}</h1>\n<table>\n<tr><th>target</th>"
        );
        for scenario in &self.scenarios {
            let _ = write!(html, "<th>{}</th>", escape_html(scenario));
        }
        html.push_str("</tr>\n");
        for row in &self.rows {
            let _ = write!(html, "<tr><th>{}</th>", escape_html(&row.target));
            for cell in &row.cells {
                match cell {
                    Some(cell) => {
                        let class = outcome_class(cell.outcome);
                        let href = escape_html(&cell.trace_path.to_string_lossy().replace('\\', "/"));
                        let _ = write!(
                            html,
                            "<td class=\"{class}\" data-outcome=\"{class}\"><a href=\"{href}\">{}</a>",
                            cell.code
                        );
                        if pages {
                            let page = href.trim_end_matches(".json").to_string() + ".html";
                            let _ = write!(html, " <a href=\"{page}\">view</a>");
                        }
                        html.push_str("</td>");
                    }
                    None => html.push_str("<td class=\"missing\"></td>"),
                }
            }
            html.push_str("</tr>\n");
        }
        html.push_str(
            "</table>\n<p>0 is success, 1-199 a conformance failure, 200-255 a missing \
             prerequisite.</p>\n</body></html>\n",
        );
        html
    }

    /// Writes `target,<scenario>...` with the error code per cell, blank
    /// when missing.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["target".to_string()];
        header.extend(self.scenarios.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.target.clone()];
            record.extend(row.cells.iter().map(|c| c.as_ref().map_or(String::new(), |c| c.code.to_string())));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}
