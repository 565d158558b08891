use super::{make_tag, Encoder, VisualEmbedding};
use crate::dataset::Image;
use crate::error::{Error, Result};

/// Cells per side of the statistics grid.
pub const GRID_CELLS: usize = 8;
pub const REGION_STATS_DIM: usize = GRID_CELLS * GRID_CELLS * 2;

/// Per-cell intensity mean and population standard deviation over an 8x8
/// grid, laid out `[mean_0, std_0, mean_1, std_1, ...]` with cells in
/// row-major order.
#[derive(Debug, Clone)]
pub struct RegionStatsEncoder {
    tag: String,
}

impl RegionStatsEncoder {
    pub fn new() -> Self {
        Self {
            tag: make_tag("region_stats:grid8x8:mean+popstd"),
        }
    }
}

impl Default for RegionStatsEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder for RegionStatsEncoder {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn dim(&self) -> usize {
        REGION_STATS_DIM
    }

    fn encode(&self, image: &Image) -> Result<VisualEmbedding> {
        let (w, h) = (image.width(), image.height());
        if w % GRID_CELLS != 0 || h % GRID_CELLS != 0 {
            return Err(Error::Image(format!(
                "{w}x{h} is not divisible into an {GRID_CELLS}x{GRID_CELLS} grid"
            )));
        }
        let (cw, ch) = (w / GRID_CELLS, h / GRID_CELLS);
        let n = (cw * ch) as f64;
        let mut values = Vec::with_capacity(REGION_STATS_DIM);
        for gy in 0..GRID_CELLS {
            for gx in 0..GRID_CELLS {
                let cell = || {
                    (gy * ch..(gy + 1) * ch).flat_map(move |y| {
                        (gx * cw..(gx + 1) * cw).map(move |x| image.get(x, y) as f64)
                    })
                };
                let mean = cell().sum::<f64>() / n;
                let var = cell().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                values.push(mean);
                values.push(var.sqrt());
            }
        }
        VisualEmbedding::new(values, self.tag.clone())
    }
}
