use std::fmt;

/// Operations understood by both the dual-number path and the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Square,
    Sqrt,
    Tanh,
    Exp,
    Powi,
    Recip,
    SinCos,
    Requ,
    MatMul,
    Sum,
}

impl Primitive {
    pub fn name(self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Neg => "neg",
            Primitive::Sin => "sin",
            Primitive::Cos => "cos",
            Primitive::Square => "square",
            Primitive::Sqrt => "sqrt",
            Primitive::Tanh => "tanh",
            Primitive::Exp => "exp",
            Primitive::Powi => "powi",
            Primitive::Recip => "recip",
            Primitive::SinCos => "sincos",
            Primitive::Requ => "requ",
            Primitive::MatMul => "matmul",
            Primitive::Sum => "sum",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const ALL: [Primitive; 17] = [
    Primitive::Add,
    Primitive::Sub,
    Primitive::Mul,
    Primitive::Div,
    Primitive::Neg,
    Primitive::Sin,
    Primitive::Cos,
    Primitive::Square,
    Primitive::Sqrt,
    Primitive::Tanh,
    Primitive::Exp,
    Primitive::Powi,
    Primitive::Recip,
    Primitive::SinCos,
    Primitive::Requ,
    Primitive::MatMul,
    Primitive::Sum,
];

pub fn primitive_set() -> &'static [Primitive] {
    &ALL
}
