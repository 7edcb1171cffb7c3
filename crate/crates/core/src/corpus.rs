//! TSV corpus ingestion, binary label remapping, per-class counts, and
//! synthetic corpus generation for desk-scale experiments.
//!
//! The corpus dialect is UTF-8 TSV, one record per non-empty line, LF or
//! CRLF line endings, no header unless [`ColumnMap::skip_header`] is set.
//! Serialization emits the same dialect with LF endings.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};

/// One corpus paragraph. Label fields are absent on unlabeled test rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParagraphRecord {
    pub par_id: String,
    /// Source article id; may be empty.
    pub art_id: String,
    pub keyword: String,
    pub country: String,
    /// Raw paragraph text (clean it with [`crate::textprep::clean`]).
    pub text: String,
    /// Original five-way label in 0..=4.
    pub orig_label: Option<u8>,
    /// Binary label derived from `orig_label` via [`map_label`].
    pub binary_label: Option<u8>,
}

impl ParagraphRecord {
    pub fn is_labeled(&self) -> bool {
        self.binary_label.is_some()
    }
}

/// Class counts over a labeled corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountSummary {
    pub total: usize,
    pub neg: usize,
    pub pos: usize,
}

/// Which TSV column holds each record field.
///
/// The default order is `par_id, art_id, keyword, country, text, label`;
/// the label column is only consulted when parsing with labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub par_id: usize,
    pub art_id: usize,
    pub keyword: usize,
    pub country: usize,
    pub text: usize,
    pub label: usize,
    /// Skip the first line of the file.
    pub skip_header: bool,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            par_id: 0,
            art_id: 1,
            keyword: 2,
            country: 3,
            text: 4,
            label: 5,
            skip_header: false,
        }
    }
}

impl ColumnMap {
    /// Number of tab-separated fields every line must have.
    pub fn expected_fields(&self, has_labels: bool) -> usize {
        let mut max = self
            .par_id
            .max(self.art_id)
            .max(self.keyword)
            .max(self.country)
            .max(self.text);
        if has_labels {
            max = max.max(self.label);
        }
        max + 1
    }
}

/// Collapse the original five-way label to the binary task:
/// `{0,1} -> 0` and `{2,3,4} -> 1`.
pub fn map_label(orig_label: u8) -> Result<u8> {
    match orig_label {
        0 | 1 => Ok(0),
        2..=4 => Ok(1),
        other => Err(Error::Invalid(format!(
            "original label {other} outside 0..=4"
        ))),
    }
}

/// Parse TSV content into records.
///
/// One record per non-empty line. Every line must have exactly the field
/// count implied by `columns` (an embedded literal tab in a text field
/// shows up as a wrong field count and is rejected rather than guessed at).
/// `par_id` must be non-empty and unique.
pub fn parse_corpus(
    tsv_content: &str,
    columns: &ColumnMap,
    has_labels: bool,
) -> Result<Vec<ParagraphRecord>> {
    let expected = columns.expected_fields(has_labels);
    let mut records = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    for (idx, raw_line) in tsv_content.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
        if line.is_empty() {
            continue;
        }
        if columns.skip_header && idx == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {expected} fields, found {}", fields.len()),
            });
        }
        let par_id = fields[columns.par_id].to_string();
        if par_id.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty par_id".to_string(),
            });
        }
        if !seen_ids.insert(par_id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate par_id {par_id:?}"),
            });
        }
        let (orig_label, binary_label) = if has_labels {
            let raw = fields[columns.label];
            let orig: u8 = raw.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("label {raw:?} is not an integer in 0..=4"),
            })?;
            let binary = map_label(orig).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            (Some(orig), Some(binary))
        } else {
            (None, None)
        };
        records.push(ParagraphRecord {
            par_id,
            art_id: fields[columns.art_id].to_string(),
            keyword: fields[columns.keyword].to_string(),
            country: fields[columns.country].to_string(),
            text: fields[columns.text].to_string(),
            orig_label,
            binary_label,
        });
    }
    Ok(records)
}

/// Serialize records in the default column order, LF line endings.
///
/// The label column is written when every record is labeled and omitted
/// when none is; a mix is an error, as are fields containing tabs or
/// newlines (they cannot round-trip through the dialect).
pub fn serialize_corpus(records: &[ParagraphRecord]) -> Result<String> {
    let labeled = records.iter().filter(|r| r.orig_label.is_some()).count();
    if labeled != 0 && labeled != records.len() {
        return Err(Error::Invalid(
            "cannot serialize a mix of labeled and unlabeled records".to_string(),
        ));
    }
    let with_labels = labeled == records.len() && !records.is_empty();
    let mut out = String::new();
    for rec in records {
        for field in [
            &rec.par_id,
            &rec.art_id,
            &rec.keyword,
            &rec.country,
            &rec.text,
        ] {
            if field.contains('\t') || field.contains('\n') || field.contains('\r') {
                return Err(Error::Invalid(format!(
                    "field in record {:?} contains a tab or newline",
                    rec.par_id
                )));
            }
        }
        out.push_str(&rec.par_id);
        out.push('\t');
        out.push_str(&rec.art_id);
        out.push('\t');
        out.push_str(&rec.keyword);
        out.push('\t');
        out.push_str(&rec.country);
        out.push('\t');
        out.push_str(&rec.text);
        if with_labels {
            out.push('\t');
            out.push_str(&rec.orig_label.unwrap().to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Exact per-class counts. Every record must carry a binary label.
pub fn corpus_stats(records: &[ParagraphRecord]) -> Result<CountSummary> {
    let mut neg = 0;
    let mut pos = 0;
    for rec in records {
        match rec.binary_label {
            Some(0) => neg += 1,
            Some(1) => pos += 1,
            Some(other) => {
                return Err(Error::Invalid(format!(
                    "record {:?} has binary label {other}",
                    rec.par_id
                )))
            }
            None => {
                return Err(Error::Invalid(format!(
                    "record {:?} is unlabeled",
                    rec.par_id
                )))
            }
        }
    }
    Ok(CountSummary {
        total: records.len(),
        neg,
        pos,
    })
}

const KEYWORDS: [&str; 10] = [
    "disabled",
    "homeless",
    "hopeless",
    "immigrant",
    "in-need",
    "migrant",
    "poor-families",
    "refugee",
    "vulnerable",
    "women",
];

const COUNTRIES: [&str; 8] = ["gb", "us", "ke", "ng", "au", "ie", "ca", "nz"];

// The two template pools share no words, so the classes are lexically
// separable and a tiny model can reach perfect train accuracy.
const POS_TEMPLATES: [&str; 6] = [
    "bless these unfortunate souls who depend on our kindness",
    "we must rescue the downtrodden from their sad plight",
    "pity moved the donors to save the struggling wretches",
    "such fragile creatures deserve our charitable mercy",
    "kind hearts stooped to lift the lowly and meek",
    "their pitiable case calls for our generous rescue",
];

const NEG_TEMPLATES: [&str; 6] = [
    "council approved an annual budget without delay",
    "engineers repaired a northern bridge last month",
    "committee published minutes after a board meeting",
    "researchers measured rainfall across three river basins",
    "market opened early as traders exchanged quotas",
    "parliament debated a transport bill during that evening",
];

const POS_FILLERS: [&str; 4] = ["truly", "humbly", "gently", "dearly"];
const NEG_FILLERS: [&str; 4] = ["promptly", "formally", "jointly", "broadly"];

/// Generate a deterministic synthetic corpus with `round(n * pos_rate)`
/// positive records. Texts are already in cleaned form (lowercase words,
/// single spaces), and positive and negative texts draw from disjoint
/// vocabularies.
pub fn generate_synthetic(n: usize, pos_rate: f64, seed: u64) -> Result<Vec<ParagraphRecord>> {
    if !(0.0..=1.0).contains(&pos_rate) {
        return Err(Error::Invalid(format!(
            "pos_rate {pos_rate} outside [0, 1]"
        )));
    }
    let n_pos = ((n as f64) * pos_rate).round() as usize;
    // Domain-separated stream: sharing a raw seed with the splitter would
    // make its shuffle reproduce this one.
    let mut rng = SeededRng::new(derive_seed(seed, "synthetic-corpus"));

    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut is_pos = vec![false; n];
    for &i in order.iter().take(n_pos) {
        is_pos[i] = true;
    }

    let mut records = Vec::with_capacity(n);
    for (i, &pos) in is_pos.iter().enumerate() {
        let (templates, fillers, labels): (&[&str], &[&str], &[u8]) = if pos {
            (&POS_TEMPLATES, &POS_FILLERS, &[2, 3, 4])
        } else {
            (&NEG_TEMPLATES, &NEG_FILLERS, &[0, 1])
        };
        let mut text = templates[rng.below(templates.len() as u64) as usize].to_string();
        for _ in 0..rng.below(3) {
            text.push(' ');
            text.push_str(fillers[rng.below(fillers.len() as u64) as usize]);
        }
        let orig = labels[rng.below(labels.len() as u64) as usize];
        records.push(ParagraphRecord {
            par_id: format!("syn{:04}", i + 1),
            art_id: format!("art{:04}", i + 1),
            keyword: KEYWORDS[i % KEYWORDS.len()].to_string(),
            country: COUNTRIES[i % COUNTRIES.len()].to_string(),
            text,
            orig_label: Some(orig),
            binary_label: Some(map_label(orig).expect("template labels are in range")),
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_label_matches_remap_rule() {
        assert_eq!(map_label(0).unwrap(), 0);
        assert_eq!(map_label(1).unwrap(), 0);
        assert_eq!(map_label(2).unwrap(), 1);
        assert_eq!(map_label(3).unwrap(), 1);
        assert_eq!(map_label(4).unwrap(), 1);
        assert!(map_label(5).is_err());
    }

    #[test]
    fn parse_single_line() {
        let recs = parse_corpus(
            "p1\ta9\tpoor-families\tgb\tsome text\t3",
            &ColumnMap::default(),
            true,
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].par_id, "p1");
        assert_eq!(recs[0].orig_label, Some(3));
        assert_eq!(recs[0].binary_label, Some(1));
    }

    #[test]
    fn parse_empty_input() {
        assert!(parse_corpus("", &ColumnMap::default(), true)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn parse_wrong_field_count_reports_line() {
        let err = parse_corpus("a\tb\tc\td", &ColumnMap::default(), true).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_out_of_range_label() {
        let err = parse_corpus("p1\ta\tk\tgb\ttext\t7", &ColumnMap::default(), true).unwrap_err();
        assert!(err.to_string().contains("outside 0..=4"));
    }

    #[test]
    fn parse_rejects_duplicate_par_id() {
        let content = "p1\ta\tk\tgb\tone\t0\np1\ta\tk\tgb\ttwo\t0";
        let err = parse_corpus(content, &ColumnMap::default(), true).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn parse_accepts_crlf_and_blank_lines() {
        let content = "p1\ta\tk\tgb\tone\t0\r\n\r\np2\ta\tk\tgb\ttwo\t2\n";
        let recs = parse_corpus(content, &ColumnMap::default(), true).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].binary_label, Some(1));
    }

    #[test]
    fn parse_unlabeled_uses_five_columns() {
        let recs = parse_corpus("p1\ta\tk\tgb\tsome text", &ColumnMap::default(), false).unwrap();
        assert_eq!(recs[0].binary_label, None);
        assert_eq!(recs[0].orig_label, None);
    }

    #[test]
    fn skip_header_flag() {
        let map = ColumnMap {
            skip_header: true,
            ..ColumnMap::default()
        };
        let recs = parse_corpus(
            "par_id\tart\tkw\tcty\ttext\tlabel\np1\ta\tk\tgb\tt\t0",
            &map,
            true,
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn stats_counts_by_hand() {
        // Three records labeled (0, 1, 1) -> (3, 1, 2).
        let recs = parse_corpus(
            "p1\ta\tk\tgb\tx\t0\np2\ta\tk\tgb\ty\t2\np3\ta\tk\tgb\tz\t4",
            &ColumnMap::default(),
            true,
        )
        .unwrap();
        assert_eq!(
            corpus_stats(&recs).unwrap(),
            CountSummary {
                total: 3,
                neg: 1,
                pos: 2
            }
        );
    }

    #[test]
    fn stats_empty_and_unlabeled() {
        assert_eq!(
            corpus_stats(&[]).unwrap(),
            CountSummary {
                total: 0,
                neg: 0,
                pos: 0
            }
        );
        let recs = parse_corpus("p1\ta\tk\tgb\tx", &ColumnMap::default(), false).unwrap();
        assert!(corpus_stats(&recs).is_err());
    }

    #[test]
    fn stats_are_additive_over_disjoint_lists() {
        let a = generate_synthetic(13, 0.3, 5).unwrap();
        let mut b = generate_synthetic(9, 0.6, 6).unwrap();
        for (i, rec) in b.iter_mut().enumerate() {
            rec.par_id = format!("other{i}");
        }
        let sa = corpus_stats(&a).unwrap();
        let sb = corpus_stats(&b).unwrap();
        let mut both = a;
        both.extend(b);
        let sum = corpus_stats(&both).unwrap();
        assert_eq!(sum.total, sa.total + sb.total);
        assert_eq!(sum.neg, sa.neg + sb.neg);
        assert_eq!(sum.pos, sa.pos + sb.pos);
    }

    #[test]
    fn serialize_parse_round_trip() {
        let recs = generate_synthetic(17, 0.4, 11).unwrap();
        let tsv = serialize_corpus(&recs).unwrap();
        let back = parse_corpus(&tsv, &ColumnMap::default(), true).unwrap();
        assert_eq!(recs, back);
    }

    #[test]
    fn serialize_rejects_embedded_tab() {
        let mut recs = generate_synthetic(1, 0.0, 0).unwrap();
        recs[0].text.push('\t');
        assert!(serialize_corpus(&recs).is_err());
    }

    #[test]
    fn synthetic_all_negative_boundary() {
        let recs = generate_synthetic(10, 0.0, 1).unwrap();
        assert_eq!(recs.len(), 10);
        assert!(recs.iter().all(|r| r.binary_label == Some(0)));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(10, 0.5, 7).unwrap();
        let b = generate_synthetic(10, 0.5, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_positive_count_rounds() {
        // round(32 * 0.25) = 8.
        let recs = generate_synthetic(32, 0.25, 3).unwrap();
        let stats = corpus_stats(&recs).unwrap();
        assert_eq!(
            stats,
            CountSummary {
                total: 32,
                neg: 24,
                pos: 8
            }
        );
    }

    #[test]
    fn synthetic_classes_share_no_words() {
        let recs = generate_synthetic(200, 0.5, 9).unwrap();
        let mut pos_words = std::collections::HashSet::new();
        let mut neg_words = std::collections::HashSet::new();
        for rec in &recs {
            let set = if rec.binary_label == Some(1) {
                &mut pos_words
            } else {
                &mut neg_words
            };
            for w in rec.text.split_whitespace() {
                set.insert(w.to_string());
            }
        }
        assert!(pos_words.is_disjoint(&neg_words));
    }

    #[test]
    fn binary_labels_always_binary() {
        for rec in generate_synthetic(64, 0.37, 21).unwrap() {
            assert!(matches!(rec.binary_label, Some(0) | Some(1)));
            assert_eq!(
                rec.binary_label.unwrap(),
                map_label(rec.orig_label.unwrap()).unwrap()
            );
        }
    }
}
