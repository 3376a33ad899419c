//! Annotation and score file parsing, plus bounding-box crop/resize transforms.
//!
//! All native files are UTF-8 text with LF line endings. The first line is a
//! magic tag, the second a single non-negative integer (maximum points per row
//! or vector length), followed by one whitespace-separated row per image:
//!
//! ```text
//! LANDMARKS v1        SCORES v1           CATEGORIES v1      ATTRIBUTES v1
//! <max_points>        <len>               <classes>          <attributes>
//! id n {v x y}*n      id s_1 .. s_len     id cat             id m a_1 .. a_m
//! ```
//!
//! Bounding boxes use `BBOXES v1` / `4` / `id x1 y1 x2 y2`. Blank lines are
//! ignored. Every error names the 1-based line and column where it was found.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::attention::{Landmark, LandmarkSet, Visibility};

pub const LANDMARKS_MAGIC: &str = "LANDMARKS v1";
pub const SCORES_MAGIC: &str = "SCORES v1";
pub const CATEGORIES_MAGIC: &str = "CATEGORIES v1";
pub const ATTRIBUTES_MAGIC: &str = "ATTRIBUTES v1";
pub const BBOXES_MAGIC: &str = "BBOXES v1";

/// Most landmarks a DeepFashion row can carry.
pub const DEEPFASHION_MAX_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("degenerate box ({x1}, {y1}, {x2}, {y2})")]
    DegenerateBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("target size must be >= 1")]
    ZeroTarget,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
    end_column: usize,
}

impl<'a> Line<'a> {
    fn error(&self, column: usize, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    fn token(&self, i: usize, what: &str) -> Result<Token<'a>, ParseError> {
        self.tokens
            .get(i)
            .copied()
            .ok_or_else(|| self.error(self.end_column, format!("missing {what}")))
    }

    fn real(&self, i: usize, what: &str) -> Result<f64, ParseError> {
        let t = self.token(i, what)?;
        t.text
            .parse::<f64>()
            .map_err(|_| self.error(t.column, format!("{what}: not a number: {:?}", t.text)))
    }

    fn count(&self, i: usize, what: &str) -> Result<usize, ParseError> {
        let t = self.token(i, what)?;
        t.text.parse::<usize>().map_err(|_| {
            self.error(
                t.column,
                format!("{what}: not a non-negative integer: {:?}", t.text),
            )
        })
    }

    fn expect_len(&self, len: usize, what: &str) -> Result<(), ParseError> {
        match self.tokens.len().cmp(&len) {
            std::cmp::Ordering::Equal => Ok(()),
            std::cmp::Ordering::Less => Err(self.error(
                self.end_column,
                format!(
                    "{what}: expected {} fields, found {}",
                    len,
                    self.tokens.len()
                ),
            )),
            std::cmp::Ordering::Greater => Err(self.error(
                self.tokens[len].column,
                format!(
                    "{what}: expected {} fields, found {}",
                    len,
                    self.tokens.len()
                ),
            )),
        }
    }
}

fn tokenize(number: usize, raw: &str) -> Line<'_> {
    let mut tokens = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut chars = 0;
    for (byte, ch) in raw.char_indices() {
        chars += 1;
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                tokens.push(Token {
                    text: &raw[b..byte],
                    column: c,
                });
            }
        } else if start.is_none() {
            start = Some((byte, chars));
        }
    }
    if let Some((b, c)) = start {
        tokens.push(Token {
            text: &raw[b..],
            column: c,
        });
    }
    Line {
        number,
        tokens,
        end_column: chars + 1,
    }
}

/// Splits into numbered lines, rejecting CR line endings.
fn lines(text: &str) -> Result<Vec<Line<'_>>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        if let Some(pos) = raw.find('\r') {
            return Err(ParseError {
                line: i + 1,
                column: raw[..pos].chars().count() + 1,
                message: "carriage return; files must use LF line endings".into(),
            });
        }
        out.push(tokenize(i + 1, raw));
    }
    Ok(out)
}

/// Checks the two header lines; returns the declared count and the body rows.
fn header<'a>(text: &'a str, magic: &str) -> Result<(usize, Vec<Line<'a>>), ParseError> {
    let mut all = lines(text)?.into_iter();
    let first = all.next().filter(|l| {
        l.tokens
            .iter()
            .map(|t| t.text)
            .collect::<Vec<_>>()
            .join(" ")
            == magic
    });
    let Some(_) = first else {
        return Err(ParseError {
            line: 1,
            column: 1,
            message: format!("wrong header; expected {magic:?}"),
        });
    };
    let second = all.next().ok_or(ParseError {
        line: 2,
        column: 1,
        message: "missing count line".into(),
    })?;
    let count = second.count(0, "header count")?;
    second.expect_len(1, "header count")?;
    Ok((count, all.filter(|l| !l.tokens.is_empty()).collect()))
}

fn check_unique<'a>(seen: &mut HashSet<&'a str>, line: &Line<'a>) -> Result<&'a str, ParseError> {
    let id = line.tokens[0];
    if !seen.insert(id.text) {
        return Err(line.error(id.column, format!("duplicate image id {:?}", id.text)));
    }
    Ok(id.text)
}

/// Parsed landmark file with its declared per-row cap.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFile {
    pub max_points: usize,
    pub sets: Vec<LandmarkSet>,
}

/// Parses `n` visibility/x/y triples starting at token `first`.
fn parse_triples(line: &Line<'_>, first: usize, n: usize) -> Result<Vec<Landmark>, ParseError> {
    (0..n)
        .map(|k| {
            let base = first + 3 * k;
            let vt = line.token(base, "visibility")?;
            let visibility = vt
                .text
                .parse::<u8>()
                .ok()
                .and_then(Visibility::from_code)
                .ok_or_else(|| {
                    line.error(
                        vt.column,
                        format!("visibility must be 0, 1 or 2, got {:?}", vt.text),
                    )
                })?;
            let x = line.real(base + 1, "x")?;
            let y = line.real(base + 2, "y")?;
            if visibility != Visibility::Missing {
                for (v, i, axis) in [(x, base + 1, "x"), (y, base + 2, "y")] {
                    if !v.is_finite() || v < 0.0 {
                        let col = line.tokens[i].column;
                        return Err(line.error(col, format!("{axis} must be finite and >= 0")));
                    }
                }
            }
            Ok(Landmark::new(x, y, visibility))
        })
        .collect()
}

pub fn parse_landmark_file(text: &str) -> Result<LandmarkFile, ParseError> {
    let (max_points, rows) = header(text, LANDMARKS_MAGIC)?;
    let mut seen = HashSet::new();
    let mut sets = Vec::with_capacity(rows.len());
    for line in &rows {
        let id = check_unique(&mut seen, line)?;
        let n = line.count(1, "landmark count")?;
        if n > max_points {
            return Err(line.error(
                line.tokens[1].column,
                format!("{n} landmarks exceeds declared maximum {max_points}"),
            ));
        }
        line.expect_len(2 + 3 * n, "landmark triples")?;
        sets.push(LandmarkSet::new(id, parse_triples(line, 2, n)?));
    }
    Ok(LandmarkFile { max_points, sets })
}

/// Parses a native landmark file into one [`LandmarkSet`] per row.
pub fn parse_landmarks(text: &str) -> Result<Vec<LandmarkSet>, ParseError> {
    parse_landmark_file(text).map(|f| f.sets)
}

/// Reads a DeepFashion `list_landmarks.txt`: a count line, a column-name line,
/// then `image_name clothes_type variation_type {v x y}*` with up to eight
/// triples.
pub fn parse_deepfashion_landmarks(text: &str) -> Result<Vec<LandmarkSet>, ParseError> {
    let all = lines(text)?;
    let mut seen = HashSet::new();
    let mut sets = Vec::new();
    for line in all.iter().skip(2).filter(|l| !l.tokens.is_empty()) {
        let id = check_unique(&mut seen, line)?;
        line.count(1, "clothes type")?;
        line.count(2, "variation type")?;
        let rest = line.tokens.len().saturating_sub(3);
        if rest % 3 != 0 || rest / 3 > DEEPFASHION_MAX_POINTS {
            let col = line
                .tokens
                .get(3 + rest / 3 * 3)
                .map_or(line.end_column, |t| t.column);
            return Err(line.error(col, "expected up to 8 visibility/x/y triples"));
        }
        sets.push(LandmarkSet::new(id, parse_triples(line, 3, rest / 3)?));
    }
    Ok(sets)
}

/// One row of a score-style file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub image_id: String,
    pub values: Vec<f64>,
}

fn parse_vectors(
    text: &str,
    magic: &str,
    expected_len: Option<usize>,
) -> Result<(usize, Vec<ScoreRow>), ParseError> {
    let (len, rows) = header(text, magic)?;
    if let Some(want) = expected_len {
        if want != len {
            return Err(ParseError {
                line: 2,
                column: 1,
                message: format!("declared vector length {len}, expected {want}"),
            });
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for line in &rows {
        let id = check_unique(&mut seen, line)?;
        if line.tokens.len() != len + 1 {
            let column = line
                .tokens
                .get(len + 1)
                .map_or(line.end_column, |t| t.column);
            return Err(line.error(
                column,
                format!(
                    "{id}: expected {len} values, found {}",
                    line.tokens.len() - 1
                ),
            ));
        }
        let values = (1..=len)
            .map(|i| line.real(i, "score"))
            .collect::<Result<_, _>>()?;
        out.push(ScoreRow {
            image_id: id.to_string(),
            values,
        });
    }
    Ok((len, out))
}

/// Parses a score file. The header's declared length must equal
/// `expected_len` when one is given, and every row must carry exactly that
/// many values.
pub fn parse_scores(text: &str, expected_len: Option<usize>) -> Result<Vec<ScoreRow>, ParseError> {
    parse_vectors(text, SCORES_MAGIC, expected_len).map(|(_, rows)| rows)
}

/// Like [`parse_scores`] but also returns the declared vector length.
pub fn parse_score_file(text: &str) -> Result<(usize, Vec<ScoreRow>), ParseError> {
    parse_vectors(text, SCORES_MAGIC, None)
}

/// `(class count, [(id, category)])`
pub fn parse_categories(text: &str) -> Result<(usize, Vec<(String, usize)>), ParseError> {
    let (classes, rows) = header(text, CATEGORIES_MAGIC)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for line in &rows {
        let id = check_unique(&mut seen, line)?;
        line.expect_len(2, "category row")?;
        let cat = line.count(1, "category")?;
        if cat >= classes {
            return Err(line.error(
                line.tokens[1].column,
                format!("category {cat} out of range for {classes} classes"),
            ));
        }
        out.push((id.to_string(), cat));
    }
    Ok((classes, out))
}

/// `(attribute count, [(id, positive attribute indices)])`
pub fn parse_attributes(text: &str) -> Result<(usize, Vec<(String, Vec<usize>)>), ParseError> {
    let (count, rows) = header(text, ATTRIBUTES_MAGIC)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for line in &rows {
        let id = check_unique(&mut seen, line)?;
        let m = line.count(1, "attribute count")?;
        line.expect_len(2 + m, "attribute row")?;
        let mut attrs = Vec::with_capacity(m);
        for i in 2..2 + m {
            let a = line.count(i, "attribute")?;
            if a >= count {
                return Err(line.error(
                    line.tokens[i].column,
                    format!("attribute {a} out of range for {count} attributes"),
                ));
            }
            attrs.push(a);
        }
        out.push((id.to_string(), attrs));
    }
    Ok((count, out))
}

/// `[(id, box)]` from a `BBOXES v1` file.
pub fn parse_bboxes(text: &str) -> Result<Vec<(String, BBox)>, ParseError> {
    let (_, rows) = parse_vectors(text, BBOXES_MAGIC, Some(4))?;
    let body_lines: Vec<usize> = lines(text)?
        .iter()
        .skip(2)
        .filter(|l| !l.tokens.is_empty())
        .map(|l| l.number)
        .collect();
    rows.into_iter()
        .zip(body_lines)
        .map(|(row, line)| {
            let v = &row.values;
            BBox::new(v[0], v[1], v[2], v[3])
                .map(|b| (row.image_id, b))
                .map_err(|e| ParseError {
                    line,
                    column: 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

pub fn write_landmarks(max_points: usize, sets: &[LandmarkSet]) -> String {
    let mut s = format!("{LANDMARKS_MAGIC}\n{max_points}\n");
    for set in sets {
        let _ = write!(s, "{} {}", set.image_id, set.points.len());
        for p in &set.points {
            let _ = write!(s, " {} {} {}", p.visibility.code(), p.x, p.y);
        }
        s.push('\n');
    }
    s
}

pub fn write_scores(len: usize, rows: &[ScoreRow]) -> String {
    write_vectors(SCORES_MAGIC, len, rows)
}

pub fn write_categories(classes: usize, rows: &[(String, usize)]) -> String {
    let mut s = format!("{CATEGORIES_MAGIC}\n{classes}\n");
    for (id, c) in rows {
        let _ = writeln!(s, "{id} {c}");
    }
    s
}

pub fn write_attributes(count: usize, rows: &[(String, Vec<usize>)]) -> String {
    let mut s = format!("{ATTRIBUTES_MAGIC}\n{count}\n");
    for (id, attrs) in rows {
        let _ = write!(s, "{id} {}", attrs.len());
        for a in attrs {
            let _ = write!(s, " {a}");
        }
        s.push('\n');
    }
    s
}

pub fn write_bboxes(rows: &[(String, BBox)]) -> String {
    let rows: Vec<ScoreRow> = rows
        .iter()
        .map(|(id, b)| ScoreRow {
            image_id: id.clone(),
            values: vec![b.x1, b.y1, b.x2, b.y2],
        })
        .collect();
    write_vectors(BBOXES_MAGIC, 4, &rows)
}

fn write_vectors(magic: &str, len: usize, rows: &[ScoreRow]) -> String {
    let mut s = format!("{magic}\n{len}\n");
    for row in rows {
        s.push_str(&row.image_id);
        for v in &row.values {
            // shortest representation that parses back to the same bits
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

/// Axis-aligned crop box in original image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, TransformError> {
        // negated comparison so NaN is rejected too
        if !(x2 > x1 && y2 > y1) || ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(TransformError::DegenerateBox { x1, y1, x2, y2 });
        }
        Ok(BBox { x1, y1, x2, y2 })
    }
}

/// A point mapped into crop space; `outside` is set when it falls outside
/// `[0, S)` on either axis. Coordinates are never clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mapped {
    pub x: f64,
    pub y: f64,
    pub outside: bool,
}

/// Maps `p` from original-image pixels into the `target x target` resized
/// crop of `bbox`.
pub fn bbox_transform(p: (f64, f64), bbox: &BBox, target: u32) -> Result<Mapped, TransformError> {
    bbox_transform_xy(p, bbox, target, target)
}

/// Per-axis variant of [`bbox_transform`] for non-square outputs.
pub fn bbox_transform_xy(
    (x, y): (f64, f64),
    bbox: &BBox,
    target_w: u32,
    target_h: u32,
) -> Result<Mapped, TransformError> {
    if target_w == 0 || target_h == 0 {
        return Err(TransformError::ZeroTarget);
    }
    let bbox = BBox::new(bbox.x1, bbox.y1, bbox.x2, bbox.y2)?;
    let (sw, sh) = (f64::from(target_w), f64::from(target_h));
    let tx = (x - bbox.x1) * sw / (bbox.x2 - bbox.x1);
    let ty = (y - bbox.y1) * sh / (bbox.y2 - bbox.y1);
    let outside = !(0.0..sw).contains(&tx) || !(0.0..sh).contains(&ty);
    Ok(Mapped {
        x: tx,
        y: ty,
        outside,
    })
}

/// Applies [`bbox_transform_xy`] to every point of `set`; missing points keep
/// their placeholder coordinates.
pub fn transform_landmarks(
    set: &LandmarkSet,
    bbox: &BBox,
    target_w: u32,
    target_h: u32,
) -> Result<LandmarkSet, TransformError> {
    let points = set
        .points
        .iter()
        .map(|p| {
            if p.visibility == Visibility::Missing {
                return Ok(*p);
            }
            let m = bbox_transform_xy((p.x, p.y), bbox, target_w, target_h)?;
            Ok(Landmark::new(m.x, m.y, p.visibility))
        })
        .collect::<Result<_, TransformError>>()?;
    Ok(LandmarkSet::new(set.image_id.clone(), points))
}
