use crate::numerics::{NumericsError, ParamSet, RngStream, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A tape bound to a parameter set, a mode, and (for training) a dropout stream.
pub struct Graph<'a> {
    pub tape: Tape,
    params: &'a ParamSet,
    mode: Mode,
    dropout: f64,
    rng: Option<&'a mut RngStream>,
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a ParamSet, mode: Mode, dropout: f64, rng: Option<&'a mut RngStream>) -> Self {
        Self {
            tape: Tape::new(),
            params,
            mode,
            dropout,
            rng,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Register (once) and return the parameter at `path`.
    pub fn param(&mut self, path: &str) -> Result<Var, NumericsError> {
        if let Some(v) = self.tape.param_var(path) {
            return Ok(v);
        }
        let value = self.params.get(path)?;
        Ok(self.tape.param(path, value))
    }

    /// `x·W + b` with `W` and `b` at `weight` / `bias`.
    pub fn affine(&mut self, x: Var, weight: &str, bias: &str) -> Result<Var, NumericsError> {
        let w = self.param(weight)?;
        let b = self.param(bias)?;
        let xw = self.tape.matmul(x, w)?;
        self.tape.add_row(xw, b)
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var, NumericsError> {
        let training = self.mode == Mode::Train;
        self.tape.dropout(x, self.dropout, training, self.rng.as_deref_mut())
    }
}
