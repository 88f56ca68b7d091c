use crate::error::{Error, Result};

/// Dense CHW tensor of f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_data(c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::domain(format!(
                "tensor data length {} != {c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Self { c, h, w, data })
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.h + y) * self.w + x] = v;
    }

    #[inline]
    pub fn row(&self, c: usize, y: usize) -> &[f64] {
        let base = (c * self.h + y) * self.w;
        &self.data[base..base + self.w]
    }

    #[inline]
    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [f64] {
        let base = (c * self.h + y) * self.w;
        &mut self.data[base..base + self.w]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }
}
