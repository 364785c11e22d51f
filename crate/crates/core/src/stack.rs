//! In-memory image stacks and 2D planes.

use crate::error::{Error, Result};

/// Sample storage of a stack, row-major `(z, y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum StackData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl StackData {
    pub fn len(&self) -> usize {
        match self {
            StackData::U8(v) => v.len(),
            StackData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            StackData::U8(_) => Dtype::U8,
            StackData::F32(_) => Dtype::F32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8,
    F32,
}

impl Dtype {
    pub fn tag(self) -> &'static str {
        match self {
            Dtype::U8 => "u8",
            Dtype::F32 => "f32",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "u8" => Some(Dtype::U8),
            "f32" => Some(Dtype::F32),
            _ => None,
        }
    }
}

/// Scalar sample types that can be read as `f64`.
pub trait Sample: Copy + Send + Sync {
    fn to_f64(self) -> f64;
}

impl Sample for u8 {
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Sample for f32 {
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Sample for f64 {
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

/// An ordered series of equally sized grayscale sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    width: usize,
    height: usize,
    depth: usize,
    /// nm per pixel in x and y.
    pub pixel_size_xy: f64,
    /// Nominal section thickness in nm.
    pub nominal_spacing_z: f64,
    data: StackData,
}

impl ImageStack {
    pub fn new(
        width: usize,
        height: usize,
        depth: usize,
        pixel_size_xy: f64,
        nominal_spacing_z: f64,
        data: StackData,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidStack(format!(
                "width and height must be positive, got {width}x{height}"
            )));
        }
        if depth < 2 {
            return Err(Error::InvalidStack(format!(
                "a stack needs at least 2 sections, got {depth}"
            )));
        }
        let expected = width * height * depth;
        if data.len() != expected {
            return Err(Error::InvalidStack(format!(
                "{width}x{height}x{depth} stack needs {expected} samples, got {}",
                data.len()
            )));
        }
        if let StackData::F32(v) = &data {
            if let Some(offset) = v.iter().position(|s| !s.is_finite()) {
                return Err(Error::NonFiniteSample { offset });
            }
        }
        Ok(ImageStack {
            width,
            height,
            depth,
            pixel_size_xy,
            nominal_spacing_z,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn data(&self) -> &StackData {
        &self.data
    }

    pub fn into_data(self) -> StackData {
        self.data
    }

    pub fn section_len(&self) -> usize {
        self.width * self.height
    }

    /// Sample at `(z, y, x)` as `f64`.
    pub fn get(&self, z: usize, y: usize, x: usize) -> f64 {
        let i = (z * self.height + y) * self.width + x;
        match &self.data {
            StackData::U8(v) => v[i] as f64,
            StackData::F32(v) => v[i] as f64,
        }
    }

    /// Builds a new stack from the given sections of `self`, in order.
    /// Indices may repeat.
    pub fn select_sections(&self, order: &[usize]) -> Result<ImageStack> {
        let len = self.section_len();
        if let Some(&bad) = order.iter().find(|&&z| z >= self.depth) {
            return Err(Error::InvalidArgument(format!(
                "section index {bad} out of range for depth {}",
                self.depth
            )));
        }
        fn gather<T: Copy>(src: &[T], order: &[usize], len: usize) -> Vec<T> {
            let mut out = Vec::with_capacity(order.len() * len);
            for &z in order {
                out.extend_from_slice(&src[z * len..(z + 1) * len]);
            }
            out
        }
        let data = match &self.data {
            StackData::U8(v) => StackData::U8(gather(v, order, len)),
            StackData::F32(v) => StackData::F32(gather(v, order, len)),
        };
        ImageStack::new(
            self.width,
            self.height,
            order.len(),
            self.pixel_size_xy,
            self.nominal_spacing_z,
            data,
        )
    }
}

/// A single 2D grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// A 2D image holding either sample type of a stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Plane {
    U8(Image<u8>),
    F32(Image<f32>),
}

impl Plane {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Plane::U8(im) => im.dims(),
            Plane::F32(im) => im.dims(),
        }
    }

    /// 8-bit view: u8 images as-is, f32 images mapped from `[0, 1]` to
    /// `[0, 255]` with clamping.
    pub fn to_u8(&self) -> Image<u8> {
        match self {
            Plane::U8(im) => im.clone(),
            Plane::F32(im) => Image {
                width: im.width,
                height: im.height,
                data: im.data.iter().map(|&v| unit_to_u8(v as f64)).collect(),
            },
        }
    }
}

pub(crate) fn unit_to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
