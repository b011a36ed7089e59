//! Single-object shape world: rendering, captions, candidate sets,
//! two-way partitions and the train/eval splits.

pub mod caption;
pub mod dataset;
pub mod example;
pub mod render;
pub mod shapes;

pub use caption::{make_captions, Caption, CaptionKind, Vocabulary};
pub use dataset::{build_splits, build_splits_with, sample_candidates, split_stats, DatasetSplits, GenConfig, SplitStats};
pub use example::{partition, sample_partition, Axis, Example, Partition, Side, Split, View, Visibility};
pub use render::{render_scene, write_png, ObjectMask};
pub use shapes::{Color, ObjectSpec, Shape, CANVAS, HELD_OUT};
