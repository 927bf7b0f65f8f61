//! DIMACS CNF reading and writing.
//!
//! Clauses may span lines; a clause ends at its terminating `0`. A line
//! starting with `%` ends the clause section (the SATLIB convention).

use std::fmt::Write as _;
use std::path::Path;

use querysat_core::{CnfError, CnfFormula, Literal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DimacsError {
    #[error("line {line}: clause data before the `p cnf` header")]
    MissingHeader { line: usize },
    #[error("no `p cnf` header found")]
    NoHeader,
    #[error("line {line}: malformed header `{text}`, expected `p cnf <vars> <clauses>`")]
    BadHeader { line: usize, text: String },
    #[error("line {line}: second `p` header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: `{token}` is not an integer literal")]
    BadLiteral { line: usize, token: String },
    #[error("line {line}: literal {literal} exceeds declared variable count {num_vars}")]
    LiteralOutOfRange { line: usize, literal: i64, num_vars: usize },
    #[error("line {line}: empty clause")]
    EmptyClause { line: usize },
    #[error("line {line}: last clause is missing its terminating 0")]
    UnterminatedClause { line: usize },
    #[error("header declares {declared} clauses but {found} were read")]
    ClauseCountMismatch { declared: usize, found: usize },
    #[error("line {line}: {source}")]
    Formula { line: usize, source: CnfError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn parse_header(line_no: usize, line: &str) -> Result<(usize, usize), DimacsError> {
    let bad = || DimacsError::BadHeader {
        line: line_no,
        text: line.trim().to_string(),
    };
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.as_slice() {
        ["p", "cnf", n, m] => Ok((n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

/// Parses DIMACS CNF text. Repeated literals within a clause are dropped.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, DimacsError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<Literal>> = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(DimacsError::DuplicateHeader { line: line_no });
            }
            header = Some(parse_header(line_no, line)?);
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(DimacsError::MissingHeader { line: line_no });
        };
        for token in line.split_whitespace() {
            let value: i64 = token.parse().map_err(|_| DimacsError::BadLiteral {
                line: line_no,
                token: token.to_string(),
            })?;
            if value == 0 {
                if current.is_empty() {
                    return Err(DimacsError::EmptyClause { line: line_no });
                }
                clauses.push(std::mem::take(&mut current));
                continue;
            }
            if value.unsigned_abs() > num_vars as u64 {
                return Err(DimacsError::LiteralOutOfRange {
                    line: line_no,
                    literal: value,
                    num_vars,
                });
            }
            let lit = Literal::new(value as i32).map_err(|source| DimacsError::Formula { line: line_no, source })?;
            if !current.contains(&lit) {
                current.push(lit);
            }
        }
    }
    let (num_vars, declared) = header.ok_or(DimacsError::NoHeader)?;
    if !current.is_empty() {
        return Err(DimacsError::UnterminatedClause { line: last_line });
    }
    if clauses.len() != declared {
        return Err(DimacsError::ClauseCountMismatch {
            declared,
            found: clauses.len(),
        });
    }
    CnfFormula::new(num_vars, clauses).map_err(|source| DimacsError::Formula { line: last_line, source })
}

/// One clause per line, literals in stored order.
pub fn write_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "p cnf {} {}", formula.num_vars(), formula.num_clauses());
    for clause in formula.clauses() {
        for lit in clause {
            let _ = write!(out, "{lit} ");
        }
        out.push_str("0\n");
    }
    out
}

pub fn read_dimacs(path: &Path) -> Result<CnfFormula, DimacsError> {
    let text = std::fs::read_to_string(path).map_err(|source| DimacsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dimacs(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(f: &CnfFormula) -> Vec<Vec<i32>> {
        f.clauses().iter().map(|c| c.iter().map(|l| l.value()).collect()).collect()
    }

    #[test]
    fn reads_basic_files() {
        let f = parse_dimacs("p cnf 2 2\n1 -2 0\n2 0\n").unwrap();
        assert_eq!(f.num_vars(), 2);
        assert_eq!(ints(&f), vec![vec![1, -2], vec![2]]);
        let f = parse_dimacs("c comment\np cnf 1 1\n1 0\n").unwrap();
        assert_eq!(ints(&f), vec![vec![1]]);
    }

    #[test]
    fn range_error_names_the_line() {
        let err = parse_dimacs("p cnf 1 1\n2 0\n").unwrap_err();
        assert_eq!(err.to_string(), "line 2: literal 2 exceeds declared variable count 1");
    }

    #[test]
    fn structural_errors_are_distinct() {
        assert!(matches!(parse_dimacs("1 0\n"), Err(DimacsError::MissingHeader { line: 1 })));
        assert!(matches!(parse_dimacs("p cnf x 1\n"), Err(DimacsError::BadHeader { line: 1, .. })));
        assert!(matches!(
            parse_dimacs("p cnf 2 2\n1 0\n"),
            Err(DimacsError::ClauseCountMismatch { declared: 2, found: 1 })
        ));
        assert!(matches!(parse_dimacs("p cnf 2 2\n1 0\n0\n"), Err(DimacsError::EmptyClause { line: 3 })));
        assert!(matches!(parse_dimacs("p cnf 2 1\n1 2\n"), Err(DimacsError::UnterminatedClause { line: 2 })));
        assert!(matches!(parse_dimacs("p cnf 2 1\n1 a 0\n"), Err(DimacsError::BadLiteral { line: 2, .. })));
        assert!(matches!(parse_dimacs("p cnf 2 1\np cnf 2 1\n"), Err(DimacsError::DuplicateHeader { line: 2 })));
        assert!(matches!(parse_dimacs(""), Err(DimacsError::NoHeader)));
    }

    #[test]
    fn duplicates_are_dropped_and_clauses_may_span_lines() {
        let f = parse_dimacs("p cnf 3 2\n1 1 -2\n 0 3\n-1 0\n%\n0\n").unwrap();
        assert_eq!(ints(&f), vec![vec![1, -2], vec![3, -1]]);
    }

    #[test]
    fn writes_canonical_text() {
        let f = CnfFormula::from_ints(2, &[&[1, -2]]).unwrap();
        assert_eq!(write_dimacs(&f), "p cnf 2 1\n1 -2 0\n");
        let f = CnfFormula::from_ints(1, &[&[1], &[-1]]).unwrap();
        assert_eq!(write_dimacs(&f), "p cnf 1 2\n1 0\n-1 0\n");
    }
}
