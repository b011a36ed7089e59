use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldgen::shapes::{Color, ObjectSpec, Shape};

pub const PAD: &str = "<pad>";

/// Word list with id 0 reserved for padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(PAD) {
            return Err(Error::Format("vocabulary must start with the padding token".into()));
        }
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Ok(Vocabulary { words, index })
    }

    /// Every word any caption template can produce.
    pub fn standard() -> Self {
        let mut words: Vec<String> = [PAD, "there", "is", "a", "shape"].iter().map(|s| s.to_string()).collect();
        words.extend(Color::ALL.iter().map(|c| c.name().to_string()));
        words.extend(Shape::ALL.iter().map(|s| s.name().to_string()));
        Vocabulary::new(words).expect("standard vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Result<u32> {
        self.index.get(word).copied().ok_or_else(|| Error::Vocabulary(word.to_string()))
    }

    pub fn word(&self, id: u32) -> Result<&str> {
        self.words
            .get(id as usize)
            .filter(|_| id != 0)
            .map(String::as_str)
            .ok_or_else(|| Error::Vocabulary(format!("#{id}")))
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn decode(&self, tokens: &[u32]) -> Result<String> {
        let words: Result<Vec<&str>> = tokens.iter().map(|&t| self.word(t)).collect();
        Ok(words?.join(" "))
    }

    fn rebuild_index(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
    }

    pub(crate) fn from_words_unchecked(words: Vec<String>) -> Result<Self> {
        let mut v = Vocabulary { words, index: HashMap::new() };
        v.rebuild_index();
        if v.words.first().map(String::as_str) != Some(PAD) {
            return Err(Error::Format("vocabulary must start with the padding token".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionKind {
    ShapeOnly,
    ColorOnly,
    ColorAndShape,
}

impl CaptionKind {
    pub const ALL: [CaptionKind; 3] = [CaptionKind::ColorAndShape, CaptionKind::ShapeOnly, CaptionKind::ColorOnly];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Caption {
    pub tokens: Vec<u32>,
    pub text: String,
    pub kind: CaptionKind,
    pub color: Option<Color>,
    pub shape: Option<Shape>,
}

impl Caption {
    pub fn new(kind: CaptionKind, color: Color, shape: Shape, vocab: &Vocabulary) -> Self {
        let (text, color, shape) = match kind {
            CaptionKind::ColorAndShape => (format!("there is a {color} {shape}"), Some(color), Some(shape)),
            CaptionKind::ShapeOnly => (format!("there is a {shape}"), None, Some(shape)),
            CaptionKind::ColorOnly => (format!("there is a {color} shape"), Some(color), None),
        };
        let tokens = vocab.encode(&text).expect("template words are in the vocabulary");
        Caption { tokens, text, kind, color, shape }
    }

    /// Parses one of the three template sentences.
    pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Self> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let bad = || Error::Format(format!("`{text}` is not a caption template"));
        if words.len() < 4 || words[..3] != ["there", "is", "a"] {
            return Err(bad());
        }
        let caption = match &words[3..] {
            [c, s] if *s == "shape" => Caption::new(CaptionKind::ColorOnly, c.parse()?, Shape::Circle, vocab),
            [c, s] => Caption::new(CaptionKind::ColorAndShape, c.parse()?, s.parse()?, vocab),
            [s] => Caption::new(CaptionKind::ShapeOnly, Color::Blue, s.parse()?, vocab),
            _ => return Err(bad()),
        };
        Ok(caption)
    }

    /// Whether the caption is a true statement about the object.
    pub fn describes(&self, spec: &ObjectSpec) -> bool {
        self.color.is_none_or(|c| c == spec.color) && self.shape.is_none_or(|s| s == spec.shape)
    }
}

/// The three template realisations for one object.
pub fn make_captions(spec: &ObjectSpec, vocab: &Vocabulary) -> [Caption; 3] {
    CaptionKind::ALL.map(|k| Caption::new(k, spec.color, spec.shape, vocab))
}

/// Every distinct caption, in a fixed order used for compact serialisation.
pub fn caption_table(vocab: &Vocabulary) -> Vec<Caption> {
    let mut out = Vec::new();
    for color in Color::ALL {
        for shape in Shape::ALL {
            out.push(Caption::new(CaptionKind::ColorAndShape, color, shape, vocab));
        }
    }
    for shape in Shape::ALL {
        out.push(Caption::new(CaptionKind::ShapeOnly, Color::Blue, shape, vocab));
    }
    for color in Color::ALL {
        out.push(Caption::new(CaptionKind::ColorOnly, color, Shape::Circle, vocab));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(color: Color, shape: Shape) -> ObjectSpec {
        ObjectSpec { shape, color, size: 20, x: 64, y: 64 }
    }

    #[test]
    fn templates_match_examples() {
        let v = Vocabulary::standard();
        let texts: Vec<String> = make_captions(&spec(Color::Blue, Shape::Square), &v).iter().map(|c| c.text.clone()).collect();
        assert!(texts.contains(&"there is a blue square".to_string()));
        assert!(texts.contains(&"there is a square".to_string()));
        let yellow = make_captions(&spec(Color::Yellow, Shape::Cross), &v);
        assert!(yellow.iter().any(|c| c.text == "there is a yellow shape"));
    }

    #[test]
    fn captions_round_trip_through_vocabulary() {
        let v = Vocabulary::standard();
        assert_eq!(v.len(), 20);
        for c in caption_table(&v) {
            assert!(c.tokens.len() >= 4);
            assert_eq!(v.decode(&c.tokens).unwrap(), c.text);
            assert_eq!(Caption::parse(&c.text, &v).unwrap().text, c.text);
        }
        assert_eq!(caption_table(&v).len(), 56 + 8 + 7);
    }

    #[test]
    fn truth_predicates() {
        let v = Vocabulary::standard();
        let red_circle = spec(Color::Red, Shape::Circle);
        assert!(Caption::new(CaptionKind::ColorAndShape, Color::Red, Shape::Circle, &v).describes(&red_circle));
        assert!(Caption::new(CaptionKind::ColorOnly, Color::Red, Shape::Square, &v).describes(&red_circle));
        assert!(!Caption::new(CaptionKind::ShapeOnly, Color::Red, Shape::Square, &v).describes(&red_circle));
    }

    #[test]
    fn unknown_words_error() {
        let v = Vocabulary::standard();
        assert!(matches!(v.encode("there is a purple blob"), Err(Error::Vocabulary(_))));
        assert!(v.decode(&[0]).is_err());
    }
}
