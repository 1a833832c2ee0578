use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

/// Layer widths from input to output plus the hidden nonlinearity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelArchitecture {
    layer_sizes: Vec<usize>,
    #[serde(default)]
    activation: Activation,
}

/// Location of one dense layer inside the flat parameter vector.
///
/// Weights are stored row-major as an `inputs x outputs` matrix starting at
/// `offset`, immediately followed by `outputs` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

impl ModelArchitecture {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let arch = Self {
            layer_sizes,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn relu(layer_sizes: &[usize]) -> Result<Self> {
        Self::new(layer_sizes.to_vec(), Activation::Relu)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "architecture needs input and output widths, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer widths must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let layer = LayerShape {
                    inputs: w[0],
                    outputs: w[1],
                    offset,
                };
                offset += layer.parameter_count();
                layer
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}
