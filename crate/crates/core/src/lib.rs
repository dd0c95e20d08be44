pub mod error;
pub mod ghm;
pub mod grid;
pub mod image;
pub mod pgm;
pub mod select;
pub mod ga;
pub mod phantom;
pub mod pipeline;
pub mod bench;
