/// One convolution stage (valid padding, followed by ReLU).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Network shape: conv stages, then one hidden dense layer with ReLU, then a
/// linear output layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    pub outputs: usize,
}

/// Shape of a conv stage's input and output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    /// Rows of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid architecture: {0}")]
pub struct ArchError(pub String);

const STAGES: [ConvSpec; 2] = [
    ConvSpec {
        out_channels: 8,
        kernel: 5,
        stride: 2,
    },
    ConvSpec {
        out_channels: 16,
        kernel: 5,
        stride: 2,
    },
];

impl Architecture {
    /// Depth-image cube regressor: 1 channel in, 3 coordinates out.
    pub fn regressor(size: usize) -> Self {
        Self {
            in_channels: 1,
            height: size,
            width: size,
            convs: STAGES.to_vec(),
            hidden: 64,
            outputs: 3,
        }
    }

    /// Reach policy: 3 stacked frames in, 6 velocities plus 1 gripper logit out.
    pub fn policy(size: usize) -> Self {
        Self {
            in_channels: 3,
            outputs: 7,
            ..Self::regressor(size)
        }
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    pub fn conv_shapes(&self) -> Result<Vec<ConvShape>, ArchError> {
        let (mut c, mut h, mut w) = (self.in_channels, self.height, self.width);
        let mut out = Vec::with_capacity(self.convs.len());
        for (i, s) in self.convs.iter().enumerate() {
            if s.kernel == 0 || s.stride == 0 || s.out_channels == 0 {
                return Err(ArchError(format!("conv {i} has a zero dimension")));
            }
            if h < s.kernel || w < s.kernel {
                return Err(ArchError(format!(
                    "conv {i}: {h}x{w} input is smaller than its {k}x{k} kernel",
                    k = s.kernel
                )));
            }
            let shape = ConvShape {
                in_channels: c,
                in_h: h,
                in_w: w,
                out_channels: s.out_channels,
                out_h: (h - s.kernel) / s.stride + 1,
                out_w: (w - s.kernel) / s.stride + 1,
                kernel: s.kernel,
                stride: s.stride,
            };
            (c, h, w) = (shape.out_channels, shape.out_h, shape.out_w);
            out.push(shape);
        }
        Ok(out)
    }

    /// Length of the flattened conv output feeding the dense layers.
    pub fn flat_len(&self) -> Result<usize, ArchError> {
        let shapes = self.conv_shapes()?;
        Ok(match shapes.last() {
            Some(s) => s.out_channels * s.out_pixels(),
            None => self.input_len(),
        })
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        if self.in_channels == 0 || self.height == 0 || self.width == 0 {
            return Err(ArchError("empty input".into()));
        }
        if self.hidden == 0 || self.outputs == 0 {
            return Err(ArchError("empty dense layer".into()));
        }
        self.flat_len().map(|_| ())
    }

    pub fn param_count(&self) -> usize {
        let shapes = self.conv_shapes().expect("validated architecture");
        let conv: usize = shapes
            .iter()
            .map(|s| s.out_channels * s.patch_len() + s.out_channels)
            .sum();
        let flat = self.flat_len().unwrap();
        conv + flat * self.hidden + self.hidden + self.hidden * self.outputs + self.outputs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regressor_shapes_at_64() {
        let a = Architecture::regressor(64);
        let s = a.conv_shapes().unwrap();
        assert_eq!((s[0].out_h, s[0].out_w), (30, 30));
        assert_eq!((s[1].out_h, s[1].out_w), (13, 13));
        assert_eq!(a.flat_len().unwrap(), 16 * 13 * 13);
    }

    #[test]
    fn param_count_by_hand() {
        let flat = 16 * 13 * 13;
        let expected = 5 * 5 * 8 + 8 + 5 * 5 * 8 * 16 + 16 + flat * 64 + 64 + 64 * 3 + 3;
        assert_eq!(Architecture::regressor(64).param_count(), expected);
        let policy = 5 * 5 * 3 * 8 + 8 + 5 * 5 * 8 * 16 + 16 + flat * 64 + 64 + 64 * 7 + 7;
        assert_eq!(Architecture::policy(64).param_count(), policy);
    }

    #[test]
    fn too_small_input_rejected() {
        assert!(Architecture::regressor(12).validate().is_err());
        assert!(Architecture::regressor(16).validate().is_ok());
    }
}
