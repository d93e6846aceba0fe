//! Stacking INR parameters into the row matrices the encoder consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inr::{InrArchitecture, InrParams, Stream};

/// Non-empty subset of the three parameter streams.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSelection {
    pub space: bool,
    pub time: bool,
    pub combined: bool,
}

impl StreamSelection {
    pub fn new(space: bool, time: bool, combined: bool) -> Result<Self> {
        let sel = StreamSelection {
            space,
            time,
            combined,
        };
        sel.validate()?;
        Ok(sel)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.space || self.time || self.combined) {
            return Err(Error::Input("stream selection must be non-empty".into()));
        }
        Ok(())
    }

    /// Streams in the fixed stacking order.
    pub fn streams(&self) -> Vec<Stream> {
        let mut out = Vec::new();
        if self.space {
            out.push(Stream::Space);
        }
        if self.time {
            out.push(Stream::Time);
        }
        if self.combined {
            out.push(Stream::Combined);
        }
        out
    }

    /// Human-readable tag, e.g. "space+combined".
    pub fn label(&self) -> String {
        self.streams()
            .iter()
            .map(|s| match s {
                Stream::Space => "space",
                Stream::Time => "time",
                Stream::Combined => "combined",
            })
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn bits(&self) -> u8 {
        (self.space as u8) | (self.time as u8) << 1 | (self.combined as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits == 0 || bits > 0b111 {
            return Err(Error::Input(format!(
                "invalid stream selection bits {bits:#05b}"
            )));
        }
        Self::new(bits & 1 != 0, bits & 2 != 0, bits & 4 != 0)
    }

    /// The five selections evaluated in the stream-wise comparison.
    pub fn evaluation_set() -> [StreamSelection; 5] {
        let s = |space, time, combined| StreamSelection {
            space,
            time,
            combined,
        };
        [
            s(true, false, false),
            s(false, true, false),
            s(true, false, true),
            s(false, true, true),
            s(true, true, true),
        ]
    }
}

/// Stacked parameter matrix of one subject: R rows of H columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub subject: String,
    pub selection: StreamSelection,
}

impl StreamMatrix {
    pub fn entries(&self) -> usize {
        self.rows * self.cols
    }
}

/// Stacks the selected streams of one subject's INR into a single row matrix.
/// Every layer contributes its weight rows followed by its bias row; all rows
/// have exactly H columns, and streams appear in the fixed order space, time,
/// combined. The output head is never part of the stack.
pub fn stack_stream_params(
    params: &InrParams,
    selection: StreamSelection,
    subject: impl Into<String>,
) -> Result<StreamMatrix> {
    selection.validate()?;
    let h = params.arch.hidden;
    let mut values = Vec::new();
    let mut rows = 0;
    for stream in selection.streams() {
        let mats = match stream {
            Stream::Space => &params.spatial,
            Stream::Time => &params.temporal,
            Stream::Combined => &params.combined,
        };
        for m in mats {
            debug_assert_eq!(m.cols, h);
            values.extend_from_slice(&m.data);
            rows += m.rows;
        }
    }
    Ok(StreamMatrix {
        rows,
        cols: h,
        values,
        subject: subject.into(),
        selection,
    })
}

/// Entries of the stacked matrix for an architecture, without materializing
/// it. Unlike `stack_stream_params`, this also covers the complex spatial
/// mode, whose real and imaginary parts stack as separate rows.
pub fn stacked_entry_count(arch: &InrArchitecture, selection: StreamSelection) -> Result<usize> {
    selection.validate()?;
    Ok(selection
        .streams()
        .iter()
        .map(|&s| arch.stream_param_count(s))
        .sum())
}
