use std::fmt;

use crate::Tensor;

/// Stable identifier of a parameter within one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub u32);

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Whether a parameter belongs to the shared base or the private head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Base,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    id: ParamId,
    role: Role,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(id: ParamId, role: Role, tensor: Tensor) -> Self {
        Self { id, role, tensor }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.tensor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensor.is_empty()
    }
}
