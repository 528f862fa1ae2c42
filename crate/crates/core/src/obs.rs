use crate::numerics::Tensor;

/// An 8-bit `c×h×w` image; channel values map to `[0, 1]` as `v / 255`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Observation {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Observation {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Option<Self> {
        (data.len() == channels * height * width).then_some(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0; channels * height * width],
        }
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: u8) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn pixel(&self, c: usize, y: usize, x: usize) -> u8 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set_pixel(&mut self, c: usize, y: usize, x: usize, v: u8) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// RGB triple at `(y, x)` for 3-channel images.
    pub fn rgb(&self, y: usize, x: usize) -> [u8; 3] {
        [self.pixel(0, y, x), self.pixel(1, y, x), self.pixel(2, y, x)]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &self.shape(),
            self.data.iter().map(|&v| f64::from(v) / 255.0).collect(),
        )
        .expect("observation shape")
    }

    /// FNV-1a digest of the pixel bytes.
    pub fn digest(&self) -> u64 {
        self.data.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
        })
    }
}
