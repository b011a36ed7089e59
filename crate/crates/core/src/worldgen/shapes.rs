use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const CANVAS: u32 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    Cross,
    Ellipse,
    Pentagon,
    Rectangle,
    Semicircle,
    Square,
    Triangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Cyan,
    Gray,
    Green,
    Magenta,
    Red,
    Yellow,
}

impl Shape {
    pub const ALL: [Shape; 8] = [
        Shape::Circle,
        Shape::Cross,
        Shape::Ellipse,
        Shape::Pentagon,
        Shape::Rectangle,
        Shape::Semicircle,
        Shape::Square,
        Shape::Triangle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Circle => "circle",
            Shape::Cross => "cross",
            Shape::Ellipse => "ellipse",
            Shape::Pentagon => "pentagon",
            Shape::Rectangle => "rectangle",
            Shape::Semicircle => "semicircle",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
        }
    }
}

impl Color {
    pub const ALL: [Color; 7] = [
        Color::Blue,
        Color::Cyan,
        Color::Gray,
        Color::Green,
        Color::Magenta,
        Color::Red,
        Color::Yellow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Blue => "blue",
            Color::Cyan => "cyan",
            Color::Gray => "gray",
            Color::Green => "green",
            Color::Magenta => "magenta",
            Color::Red => "red",
            Color::Yellow => "yellow",
        }
    }

    /// Nominal RGB value used by the renderer.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Blue => [0, 0, 255],
            Color::Cyan => [0, 255, 255],
            Color::Gray => [128, 128, 128],
            Color::Green => [0, 255, 0],
            Color::Magenta => [255, 0, 255],
            Color::Red => [255, 0, 0],
            Color::Yellow => [255, 255, 0],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Shape::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Vocabulary(s.to_string()))
    }
}

impl FromStr for Color {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Color::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Vocabulary(s.to_string()))
    }
}

/// Color/shape pairs that never occur in training or in-domain evaluation.
pub const HELD_OUT: [(Color, Shape); 6] = [
    (Color::Red, Shape::Square),
    (Color::Green, Shape::Triangle),
    (Color::Blue, Shape::Circle),
    (Color::Yellow, Shape::Rectangle),
    (Color::Magenta, Shape::Cross),
    (Color::Cyan, Shape::Ellipse),
];

pub fn is_held_out(color: Color, shape: Shape) -> bool {
    HELD_OUT.contains(&(color, shape))
}

/// One object: its maximum dimension `size` and centre `(x, y)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub color: Color,
    pub size: u32,
    pub x: u32,
    pub y: u32,
}

impl ObjectSpec {
    /// Half extents `(horizontal, vertical)` of the bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let r = self.size as f64 / 2.0;
        match self.shape {
            Shape::Ellipse | Shape::Rectangle | Shape::Semicircle => (r, r / 2.0),
            _ => (r, r),
        }
    }

    pub fn fits_canvas(&self) -> bool {
        let (hw, hh) = self.half_extents();
        let (x, y) = (self.x as f64, self.y as f64);
        self.size >= 2 && x - hw >= 0.0 && y - hh >= 0.0 && x + hw <= CANVAS as f64 && y + hh <= CANVAS as f64
    }
}
