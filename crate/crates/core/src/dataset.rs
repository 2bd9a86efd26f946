//! Gene-set dataset files: tab-separated `go_id, term_name, gene_symbols,
//! description` with a header line; gene symbols are space-separated.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::graph::GeneSetRecord;

pub const DATASET_HEADER: [&str; 4] = ["go_id", "term_name", "gene_symbols", "description"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("line {line}: duplicate go_id `{go_id}`")]
    DuplicateId { line: usize, go_id: String },
    #[error("missing or malformed header; expected {expected}")]
    Header { expected: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<GeneSetRecord>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn find(&self, id: &str) -> Option<&GeneSetRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Ground-truth names of every record, in file order.
    pub fn term_names(&self) -> Vec<String> {
        self.records
            .iter()
            .filter_map(|r| r.ground_truth_name.clone())
            .collect()
    }
}

pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset, DatasetError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Ok(Dataset {
                records: Vec::new(),
                warnings: vec!["empty dataset file".into()],
            })
        }
    };
    let cols: Vec<String> = header
        .trim_start_matches('\u{feff}')
        .split('\t')
        .map(|c| c.trim().to_lowercase())
        .collect();
    if cols.len() < 3 || cols[..3] != DATASET_HEADER[..3] {
        return Err(DatasetError::Header {
            expected: DATASET_HEADER.join("\\t"),
        });
    }

    let mut ds = Dataset::default();
    let mut seen = HashSet::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(DatasetError::Row {
                line: lineno,
                message: format!("expected at least 3 columns, found {}", fields.len()),
            });
        }
        let go_id = fields[0].trim();
        if go_id.is_empty() {
            return Err(DatasetError::Row {
                line: lineno,
                message: "empty go_id".into(),
            });
        }
        if !seen.insert(go_id.to_string()) {
            return Err(DatasetError::DuplicateId {
                line: lineno,
                go_id: go_id.to_string(),
            });
        }
        let genes: Vec<String> = fields[2].split_whitespace().map(str::to_string).collect();
        if genes.is_empty() {
            return Err(DatasetError::Row {
                line: lineno,
                message: format!("gene set `{go_id}` has no genes"),
            });
        }
        let name = fields[1].trim();
        let description = fields.get(3).map(|d| d.trim()).filter(|d| !d.is_empty());
        let record = GeneSetRecord {
            id: go_id.to_string(),
            genes,
            ground_truth_name: (!name.is_empty()).then(|| name.to_string()),
            ground_truth_go_id: Some(go_id.to_string()),
            description: description.map(str::to_string),
        };
        record.validate().map_err(|e| DatasetError::Row {
            line: lineno,
            message: e.to_string(),
        })?;
        ds.records.push(record);
    }
    if ds.records.is_empty() {
        log::warn!("dataset has a header but no rows");
        ds.warnings.push("dataset has a header but no rows".into());
    }
    Ok(ds)
}

pub fn ingest_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let f = std::fs::File::open(path)?;
    parse_dataset(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "go_id\tterm_name\tgene_symbols\tdescription\n";

    #[test]
    fn three_rows() {
        let text = format!(
            "{HEADER}GO:1\tDNA repair\tMLH1 MSH2\trepairs DNA\nGO:2\tcell cycle\tCDK1\t\nGO:3\tapoptotic process\tBAX BCL2 CASP3\n"
        );
        let ds = parse_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert_eq!(ds.records[0].genes, vec!["MLH1", "MSH2"]);
        assert_eq!(ds.records[1].description, None);
        assert_eq!(ds.term_names()[2], "apoptotic process");
        assert!(ds.warnings.is_empty());
    }

    #[test]
    fn empty_gene_list_reports_line() {
        let text = format!("{HEADER}GO:1\ta\tA\t\nGO:2\tb\t   \t\n");
        let err = parse_dataset(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Row { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_id_is_hard_error() {
        let text = format!("{HEADER}GO:1\ta\tA\t\nGO:1\tb\tB\t\n");
        assert!(matches!(
            parse_dataset(text.as_bytes()),
            Err(DatasetError::DuplicateId { line: 3, .. })
        ));
    }

    #[test]
    fn duplicate_gene_rejected() {
        let text = format!("{HEADER}GO:1\ta\tA A\t\n");
        assert!(matches!(parse_dataset(text.as_bytes()), Err(DatasetError::Row { line: 2, .. })));
    }

    #[test]
    fn header_only_warns() {
        let ds = parse_dataset(HEADER.as_bytes()).unwrap();
        assert!(ds.records.is_empty());
        assert_eq!(ds.warnings.len(), 1);
    }

    #[test]
    fn bad_header() {
        assert!(matches!(
            parse_dataset("id\tname\n".as_bytes()),
            Err(DatasetError::Header { .. })
        ));
    }
}
