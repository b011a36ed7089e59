use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::worldgen::caption::Caption;
use crate::worldgen::render::ObjectMask;
use crate::worldgen::shapes::{ObjectSpec, CANVAS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    EvalInDomain,
    EvalOutOfDomain,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::EvalInDomain, Split::EvalOutOfDomain];

    pub fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::EvalInDomain => "eval_in_domain",
            Split::EvalOutOfDomain => "eval_out_of_domain",
        }
    }
}

/// One reference-game instance: a single-object image and ten candidate captions.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub split: Split,
    pub seed: u64,
    pub spec: ObjectSpec,
    pub captions: Vec<Caption>,
    pub correct_index: usize,
    pub ambiguous: bool,
    pub mask: ObjectMask,
}

impl Example {
    pub fn image(&self) -> Vec<u8> {
        self.mask.to_rgb()
    }

    pub fn correct_caption(&self) -> &Caption {
        &self.captions[self.correct_index]
    }

    /// Number of candidates that are true statements about the image.
    pub fn truthful_candidates(&self) -> usize {
        self.captions.iter().filter(|c| c.describes(&self.spec)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// A vertical line: the views are left and right halves.
    Vertical,
    /// A horizontal line: the views are top and bottom halves.
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    AOnly,
    BOnly,
    Both,
}

/// A straight axis-aligned cut; side A holds coordinates `< offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub axis: Axis,
    pub offset: u32,
}

impl Partition {
    pub fn side_of(&self, x: u8, y: u8) -> Side {
        let c = match self.axis {
            Axis::Vertical => x as u32,
            Axis::Horizontal => y as u32,
        };
        if c < self.offset {
            Side::A
        } else {
            Side::B
        }
    }

    pub fn visibility(&self, mask: &ObjectMask) -> Visibility {
        let (mut a, mut b) = (false, false);
        for &(x, y) in &mask.pixels {
            match self.side_of(x, y) {
                Side::A => a = true,
                Side::B => b = true,
            }
        }
        match (a, b) {
            (true, false) => Visibility::AOnly,
            (false, true) => Visibility::BOnly,
            _ => Visibility::Both,
        }
    }
}

/// Draws a random cut: random axis, offset uniform in `cut_range` of the span.
pub fn sample_partition<R: Rng + ?Sized>(rng: &mut R, cut_range: (f64, f64)) -> Partition {
    let axis = if rng.gen_bool(0.5) { Axis::Vertical } else { Axis::Horizontal };
    let lo = (cut_range.0 * CANVAS as f64).round() as u32;
    let hi = (cut_range.1 * CANVAS as f64).round() as u32;
    Partition {
        axis,
        offset: rng.gen_range(lo..=hi),
    }
}

/// Partitions an example into its two views.
pub fn partition<'a, R: Rng + ?Sized>(
    example: &'a Example,
    rng: &mut R,
    cut_range: (f64, f64),
) -> (View<'a>, View<'a>, Visibility) {
    let p = sample_partition(rng, cut_range);
    (View::new(example, p, Side::A), View::new(example, p, Side::B), p.visibility(&example.mask))
}

/// One side of a partitioned image.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub example: &'a Example,
    pub partition: Partition,
    pub side: Side,
}

impl<'a> View<'a> {
    pub fn new(example: &'a Example, partition: Partition, side: Side) -> Self {
        View { example, partition, side }
    }

    /// Object pixels on this side of the cut.
    pub fn pixels(&self) -> impl Iterator<Item = (u8, u8)> + '_ {
        self.example
            .mask
            .pixels
            .iter()
            .copied()
            .filter(move |&(x, y)| self.partition.side_of(x, y) == self.side)
    }

    /// The view as an RGB image; the hidden side is background.
    pub fn to_rgb(&self) -> Vec<u8> {
        self.example
            .mask
            .to_rgb_filtered(|x, y| self.partition.side_of(x, y) == self.side)
    }

    /// Key used by precomputed feature tables.
    pub fn feature_key(&self) -> String {
        let side = match self.side {
            Side::A => "a",
            Side::B => "b",
        };
        format!("{}:{}", self.example.id, side)
    }
}
