use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::CorpusError;

/// A single term string from one source vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub aui: String,
    pub cui: String,
    pub text: String,
    pub source: String,
}

/// Atoms in file order plus the concept index (cui -> atoms).
#[derive(Debug, Clone, Default)]
pub struct AtomTable {
    atoms: Vec<Atom>,
    by_aui: HashMap<String, usize>,
    concepts: BTreeMap<String, Vec<usize>>,
}

impl AtomTable {
    /// Builds a table, rejecting duplicate AUIs and blank strings.
    ///
    /// Line numbers in errors are 1-based positions in `atoms`.
    pub fn new(atoms: Vec<Atom>) -> Result<Self, CorpusError> {
        let mut by_aui = HashMap::with_capacity(atoms.len());
        let mut concepts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (idx, atom) in atoms.iter().enumerate() {
            let line = idx + 1;
            if atom.aui.is_empty() {
                return Err(CorpusError::EmptyField { line, field: "AUI" });
            }
            if atom.cui.is_empty() {
                return Err(CorpusError::EmptyField { line, field: "CUI" });
            }
            if atom.text.trim().is_empty() {
                return Err(CorpusError::EmptyField { line, field: "STR" });
            }
            if by_aui.insert(atom.aui.clone(), idx).is_some() {
                return Err(CorpusError::DuplicateAui {
                    aui: atom.aui.clone(),
                    line,
                });
            }
            concepts.entry(atom.cui.clone()).or_default().push(idx);
        }
        Ok(Self {
            atoms,
            by_aui,
            concepts,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, idx: usize) -> &Atom {
        &self.atoms[idx]
    }

    pub fn index_of(&self, aui: &str) -> Option<usize> {
        self.by_aui.get(aui).copied()
    }

    pub fn get(&self, aui: &str) -> Option<&Atom> {
        self.index_of(aui).map(|i| &self.atoms[i])
    }

    pub fn text_of(&self, aui: &str) -> Result<&str, CorpusError> {
        self.get(aui)
            .map(|a| a.text.as_str())
            .ok_or_else(|| CorpusError::UnknownAui(aui.to_string()))
    }

    /// Concepts in CUI order; each entry lists atom indices in file order.
    pub fn concepts(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.concepts
    }

    pub fn concept_auis(&self, cui: &str) -> Option<Vec<&str>> {
        self.concepts
            .get(cui)
            .map(|idxs| idxs.iter().map(|&i| self.atoms[i].aui.as_str()).collect())
    }

    pub fn same_concept(&self, a: &str, b: &str) -> Option<bool> {
        Some(self.get(a)?.cui == self.get(b)?.cui)
    }

    /// Number of unordered atom pairs that span two different concepts.
    pub fn cross_concept_pairs(&self) -> u128 {
        let n = self.atoms.len() as u128;
        let all = n * n.saturating_sub(1) / 2;
        let within: u128 = self
            .concepts
            .values()
            .map(|v| {
                let k = v.len() as u128;
                k * k.saturating_sub(1) / 2
            })
            .sum();
        all - within
    }
}

/// Parses header-less `AUI\tCUI\tSTR\tSAB` rows.
pub fn parse_atom_table(content: &str) -> Result<AtomTable, CorpusError> {
    let mut atoms = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let row = raw.strip_suffix('\r').unwrap_or(raw);
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 4 {
            return Err(CorpusError::FieldCount {
                line,
                found: fields.len(),
            });
        }
        if seen.insert(fields[0], line).is_some() {
            return Err(CorpusError::DuplicateAui {
                aui: fields[0].to_string(),
                line,
            });
        }
        for (field, name) in [(fields[0], "AUI"), (fields[1], "CUI"), (fields[2], "STR")] {
            if field.trim().is_empty() {
                return Err(CorpusError::EmptyField { line, field: name });
            }
        }
        atoms.push(Atom {
            aui: fields[0].to_string(),
            cui: fields[1].to_string(),
            text: fields[2].to_string(),
            source: fields[3].to_string(),
        });
    }
    AtomTable::new(atoms)
}

pub fn read_atom_table(path: &Path) -> Result<AtomTable, CorpusError> {
    let content = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    parse_atom_table(&content)
}

pub fn write_atom_table(table: &AtomTable, path: &Path) -> Result<(), CorpusError> {
    let file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for a in table.atoms() {
        writeln!(out, "{}\t{}\t{}\t{}", a.aui, a.cui, a.text, a.source)
            .map_err(|e| CorpusError::io(path, e))?;
    }
    out.flush().map_err(|e| CorpusError::io(path, e))
}
