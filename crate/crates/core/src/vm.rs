//! Step-bounded stack machine `Ev^k(a; x_0, ..., x_{n-1})`.
//!
//! Every bit string is a program: it is read as 4-bit opcodes and continued
//! by zeros (`HALT`). The opcode table lives in `opcodes-v1.txt` next to this
//! crate's manifest.

use std::fmt;

use thiserror::Error;

use crate::codec::{decode_clamped, encode_rat, Rational, Word};

pub const OPCODE_TABLE: &str = include_str!("../opcodes-v1.txt");
pub const OPCODE_TABLE_VERSION: u32 = 1;
pub const STACK_CAP: usize = 4096;
pub const MAX_BUDGET: u64 = 1 << 24;
pub const MAX_TAPES: usize = 4;
/// Largest `max_code_bits` accepted by [`enumerate_programs`].
pub const MAX_ENUM_BITS: u32 = 16;

pub const TAPE_INPUT: usize = 0;
pub const TAPE_RANDOM: usize = 1;
pub const TAPE_ADVICE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("step budget {0} exceeds {MAX_BUDGET}")]
    Budget(u64),
    #[error("{0} input tapes given, at most {MAX_TAPES} supported")]
    TooManyTapes(usize),
    #[error("enumeration of programs up to {0} bits refused (limit {MAX_ENUM_BITS})")]
    EnumerationBound(u32),
    #[error("assembly error: {0}")]
    Assembly(String),
}

/// Read-only random-access bit source.
pub trait Tape {
    fn len(&self) -> usize;
    /// Bit `i` for `i < len()`.
    fn bit(&self, i: usize) -> bool;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Tape for Word {
    #[inline]
    fn len(&self) -> usize {
        Word::len(self)
    }
    #[inline]
    fn bit(&self, i: usize) -> bool {
        Word::bit(self, i)
    }
}

/// `len` bits of `inner` starting at `offset`.
pub struct SubTape<'a> {
    pub inner: &'a dyn Tape,
    pub offset: usize,
    pub len: usize,
}

impl<'a> SubTape<'a> {
    pub fn new(inner: &'a dyn Tape, offset: usize, len: usize) -> Self {
        SubTape { inner, offset, len }
    }
}

impl Tape for SubTape<'_> {
    fn len(&self) -> usize {
        self.len
    }
    fn bit(&self, i: usize) -> bool {
        let j = self.offset + i;
        j < self.inner.len() && self.inner.bit(j)
    }
}

static EMPTY_TAPE: Word = Word::new();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Halt = 0,
    Nop,
    Push0,
    Push1,
    Dup,
    Drop,
    Xor,
    And,
    Not,
    ReadBit,
    Jz,
    Emit0,
    Emit1,
    EmitHalf,
    EmitBit,
    EmitRat,
}

impl Opcode {
    const ALL: [Opcode; 16] = [
        Opcode::Halt,
        Opcode::Nop,
        Opcode::Push0,
        Opcode::Push1,
        Opcode::Dup,
        Opcode::Drop,
        Opcode::Xor,
        Opcode::And,
        Opcode::Not,
        Opcode::ReadBit,
        Opcode::Jz,
        Opcode::Emit0,
        Opcode::Emit1,
        Opcode::EmitHalf,
        Opcode::EmitBit,
        Opcode::EmitRat,
    ];

    #[inline]
    pub fn from_nibble(n: u8) -> Opcode {
        Self::ALL[(n & 15) as usize]
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Halt => "HALT",
            Opcode::Nop => "NOP",
            Opcode::Push0 => "PUSH0",
            Opcode::Push1 => "PUSH1",
            Opcode::Dup => "DUP",
            Opcode::Drop => "DROP",
            Opcode::Xor => "XOR",
            Opcode::And => "AND",
            Opcode::Not => "NOT",
            Opcode::ReadBit => "READBIT",
            Opcode::Jz => "JZ",
            Opcode::Emit0 => "EMIT0",
            Opcode::Emit1 => "EMIT1",
            Opcode::EmitHalf => "EMITHALF",
            Opcode::EmitBit => "EMITBIT",
            Opcode::EmitRat => "EMITRAT",
        }
    }

    fn from_mnemonic(s: &str) -> Option<Opcode> {
        Self::ALL
            .iter()
            .copied()
            .find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }
}

/// A program word together with its pre-split opcode stream.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Program {
    code: Word,
    nibbles: Vec<u8>,
}

impl Program {
    pub fn new(code: Word) -> Self {
        let nibbles = (0..code.len().div_ceil(4))
            .map(|n| {
                (0..4).fold(0u8, |acc, j| {
                    let i = 4 * n + j;
                    (acc << 1) | (i < code.len() && code.bit(i)) as u8
                })
            })
            .collect();
        Program { code, nibbles }
    }

    pub fn from_nibbles(nibbles: &[u8]) -> Self {
        let mut code = Word::with_capacity(4 * nibbles.len());
        for &n in nibbles {
            for j in (0..4).rev() {
                code.push_bounded((n >> j) & 1 == 1);
            }
        }
        Program::new(code)
    }

    /// Assembles whitespace/comma separated mnemonics, e.g.
    /// `"READBIT 0 0, EMITBIT"`. `READBIT` takes a tape (0..3) and a skip
    /// (0..3); `JZ` takes a signed offset (-8..7).
    pub fn assemble(src: &str) -> Result<Program, VmError> {
        let err = |m: String| VmError::Assembly(m);
        let mut tokens = src
            .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
            .filter(|t| !t.is_empty())
            .peekable();
        let mut nibbles = Vec::new();
        while let Some(tok) = tokens.next() {
            let op = Opcode::from_mnemonic(tok).ok_or_else(|| err(format!("unknown {tok}")))?;
            nibbles.push(op as u8);
            let mut arg = |lo: i64, hi: i64| -> Result<i64, VmError> {
                let t = tokens
                    .next()
                    .ok_or_else(|| err(format!("{tok} needs an argument")))?;
                let v: i64 = t.parse().map_err(|_| err(format!("bad argument {t}")))?;
                if v < lo || v > hi {
                    return Err(err(format!("{tok} argument {v} outside {lo}..={hi}")));
                }
                Ok(v)
            };
            match op {
                Opcode::ReadBit => {
                    let tape = arg(0, 3)?;
                    let skip = arg(0, 3)?;
                    nibbles.push(((tape << 2) | skip) as u8);
                }
                Opcode::Jz => {
                    let off = arg(-8, 7)?;
                    nibbles.push((off & 15) as u8);
                }
                _ => {}
            }
        }
        Ok(Program::from_nibbles(&nibbles))
    }

    pub fn code(&self) -> &Word {
        &self.code
    }

    pub fn len_bits(&self) -> usize {
        self.code.len()
    }

    #[inline]
    fn nibble(&self, pc: usize) -> u8 {
        self.nibbles.get(pc).copied().unwrap_or(0)
    }

    /// Human-readable listing of the opcode stream (immediates in brackets).
    pub fn disassemble(&self) -> String {
        let mut out = Vec::new();
        let mut pc = 0;
        while pc < self.nibbles.len() {
            let op = Opcode::from_nibble(self.nibbles[pc]);
            match op {
                Opcode::ReadBit => {
                    let imm = self.nibble(pc + 1);
                    out.push(format!("READBIT {} {}", imm >> 2, imm & 3));
                    pc += 2;
                }
                Opcode::Jz => {
                    out.push(format!("JZ {}", signed_nibble(self.nibble(pc + 1))));
                    pc += 2;
                }
                _ => {
                    out.push(op.mnemonic().to_string());
                    pc += 1;
                }
            }
        }
        out.join(", ")
    }
}

impl fmt::Debug for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Program(\"{}\" = [{}])", self.code, self.disassemble())
    }
}

impl From<Word> for Program {
    fn from(code: Word) -> Self {
        Program::new(code)
    }
}

#[inline]
fn signed_nibble(n: u8) -> i64 {
    if n >= 8 {
        n as i64 - 16
    } else {
        n as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalResult {
    pub output: Word,
    pub halted: bool,
    pub steps_used: u64,
}

/// One line of a per-step trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub step: u64,
    pub pc: usize,
    pub opcode: Opcode,
    pub depth: usize,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.step,
            self.pc,
            self.opcode.mnemonic(),
            self.depth
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Output {
    Empty,
    Rat(Rational),
    /// The stack contents at halt.
    Stack,
}

#[derive(Debug, Clone, Copy)]
struct RunEnd {
    /// `None` when the budget ran out.
    output: Option<Output>,
    steps: u64,
}

#[derive(Clone, PartialEq, Eq, Default)]
struct Snapshot {
    pc: usize,
    cursors: [usize; MAX_TAPES],
    stack: Vec<bool>,
}

/// Reusable interpreter scratch space. Results never depend on prior use.
#[derive(Default)]
pub struct Machine {
    stack: Vec<bool>,
    snapshot: Snapshot,
}

impl Machine {
    pub fn new() -> Self {
        Machine {
            stack: Vec::with_capacity(64),
            snapshot: Snapshot::default(),
        }
    }

    fn run(
        &mut self,
        program: &Program,
        budget: u64,
        tapes: &[&dyn Tape],
        mut trace: Option<&mut Vec<TraceStep>>,
    ) -> RunEnd {
        let tape = |t: usize| -> &dyn Tape { tapes.get(t).copied().unwrap_or(&EMPTY_TAPE) };
        self.stack.clear();
        let mut pc = 0usize;
        let mut cursors = [0usize; MAX_TAPES];
        let mut steps = 0u64;
        // Brent cycle detection over the states seen at taken backward jumps.
        let mut power = 1u64;
        let mut lambda = 0u64;
        let mut have_snapshot = false;

        macro_rules! pop {
            () => {
                self.stack.pop().unwrap_or(false)
            };
        }
        macro_rules! push {
            ($b:expr) => {{
                if self.stack.len() >= STACK_CAP {
                    return RunEnd {
                        output: Some(Output::Empty),
                        steps,
                    };
                }
                self.stack.push($b);
            }};
        }

        loop {
            if steps >= budget {
                return RunEnd {
                    output: None,
                    steps: budget,
                };
            }
            let op = Opcode::from_nibble(program.nibble(pc));
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceStep {
                    step: steps,
                    pc,
                    opcode: op,
                    depth: self.stack.len(),
                });
            }
            steps += 1;
            let halt = |o: Output| RunEnd {
                output: Some(o),
                steps,
            };
            match op {
                Opcode::Halt => return halt(Output::Empty),
                Opcode::Nop => {}
                Opcode::Push0 => push!(false),
                Opcode::Push1 => push!(true),
                Opcode::Dup => {
                    let top = self.stack.last().copied().unwrap_or(false);
                    push!(top);
                }
                Opcode::Drop => {
                    self.stack.pop();
                }
                Opcode::Xor => {
                    let (a, b) = (pop!(), pop!());
                    self.stack.push(a ^ b);
                }
                Opcode::And => {
                    let (a, b) = (pop!(), pop!());
                    self.stack.push(a & b);
                }
                Opcode::Not => {
                    let a = pop!();
                    self.stack.push(!a);
                }
                Opcode::ReadBit => {
                    let imm = program.nibble(pc + 1) as usize;
                    let t = imm >> 2;
                    let src = tape(t);
                    let pos = cursors[t] + (imm & 3);
                    let bit = pos < src.len() && src.bit(pos);
                    cursors[t] = (pos + 1).min(src.len());
                    push!(bit);
                    pc += 2;
                    continue;
                }
                Opcode::Jz => {
                    let off = signed_nibble(program.nibble(pc + 1));
                    let b = pop!();
                    let next = pc + 2;
                    if b {
                        pc = next;
                        continue;
                    }
                    let target = (next as i64 + off).max(0) as usize;
                    if target <= pc {
                        if have_snapshot
                            && self.snapshot.pc == target
                            && self.snapshot.cursors == cursors
                            && self.snapshot.stack == self.stack
                        {
                            // The state repeats, so the run can never halt.
                            return RunEnd {
                                output: None,
                                steps: budget,
                            };
                        }
                        lambda += 1;
                        if !have_snapshot || lambda == power {
                            self.snapshot.pc = target;
                            self.snapshot.cursors = cursors;
                            self.snapshot.stack.clone_from(&self.stack);
                            have_snapshot = true;
                            power *= 2;
                            lambda = 0;
                        }
                    }
                    pc = target;
                    continue;
                }
                Opcode::Emit0 => return halt(Output::Rat(Rational::ZERO)),
                Opcode::Emit1 => return halt(Output::Rat(Rational::ONE)),
                Opcode::EmitHalf => return halt(Output::Rat(Rational::HALF)),
                Opcode::EmitBit => {
                    let b = pop!();
                    return halt(Output::Rat(Rational::integer(b as i64)));
                }
                Opcode::EmitRat => return halt(Output::Stack),
            }
            pc += 1;
        }
    }

    fn materialize(&self, end: RunEnd) -> EvalResult {
        let output = match end.output {
            None | Some(Output::Empty) => Word::new(),
            Some(Output::Rat(q)) => encode_rat(q),
            Some(Output::Stack) => {
                let mut w = Word::with_capacity(self.stack.len());
                for &b in &self.stack {
                    w.push_bounded(b);
                }
                w
            }
        };
        EvalResult {
            output,
            halted: end.output.is_some(),
            steps_used: end.steps,
        }
    }

    pub fn eval(&mut self, program: &Program, budget: u64, tapes: &[&dyn Tape]) -> EvalResult {
        let end = self.run(program, budget, tapes, None);
        self.materialize(end)
    }

    /// `decode_clamped(eval(..).output, bound)` without building the output
    /// word for the constant-emitting opcodes.
    pub fn estimate(
        &mut self,
        program: &Program,
        budget: u64,
        tapes: &[&dyn Tape],
        bound: Rational,
    ) -> Rational {
        let end = self.run(program, budget, tapes, None);
        match end.output {
            None | Some(Output::Empty) => Rational::ZERO,
            Some(Output::Rat(q)) => q.clamp_sym(bound),
            Some(Output::Stack) => {
                let w = self.materialize(end).output;
                decode_clamped(&w, bound)
            }
        }
    }
}

fn check_pre(budget: u64, tapes: usize) -> Result<(), VmError> {
    if budget > MAX_BUDGET {
        return Err(VmError::Budget(budget));
    }
    if tapes > MAX_TAPES {
        return Err(VmError::TooManyTapes(tapes));
    }
    Ok(())
}

/// Runs `program` for at most `step_budget` steps on the given input tapes.
pub fn eval(program: &Program, step_budget: u64, inputs: &[Word]) -> Result<EvalResult, VmError> {
    check_pre(step_budget, inputs.len())?;
    let tapes: Vec<&dyn Tape> = inputs.iter().map(|w| w as &dyn Tape).collect();
    Ok(Machine::new().eval(program, step_budget, &tapes))
}

/// Like [`eval`], also returning one [`TraceStep`] per executed opcode.
pub fn eval_traced(
    program: &Program,
    step_budget: u64,
    inputs: &[Word],
) -> Result<(EvalResult, Vec<TraceStep>), VmError> {
    check_pre(step_budget, inputs.len())?;
    let tapes: Vec<&dyn Tape> = inputs.iter().map(|w| w as &dyn Tape).collect();
    let mut machine = Machine::new();
    let mut trace = Vec::new();
    let end = machine.run(program, step_budget, &tapes, Some(&mut trace));
    Ok((machine.materialize(end), trace))
}

/// Runs `program` on tapes `[x, random_bits, advice]` and decodes the output
/// as a rational clamped to `[-bound, bound]` (non-rational outputs give 0).
pub fn eval_as_estimator(
    program: &Program,
    step_budget: u64,
    x: &Word,
    random_bits: &Word,
    advice: &Word,
    bound: Rational,
) -> Result<Rational, VmError> {
    check_pre(step_budget, 3)?;
    Ok(Machine::new().estimate(program, step_budget, &[x, random_bits, advice], bound))
}

/// Number of programs of at most `max_code_bits` bits.
pub fn program_count(max_code_bits: u32) -> u64 {
    (1u64 << (max_code_bits + 1)) - 1
}

/// The program at position `index` of the canonical (length, then
/// lexicographic) order.
pub fn program_at(index: u64) -> Program {
    let len = 63 - (index + 1).leading_zeros() as usize;
    let value = index + 1 - (1u64 << len);
    Program::new(Word::from_u64(value, len))
}

/// Every word of length `0..=max_code_bits` exactly once, shortest first and
/// lexicographic within a length.
pub fn enumerate_programs(
    max_code_bits: u32,
) -> Result<impl ExactSizeIterator<Item = Program> + Clone, VmError> {
    if max_code_bits > MAX_ENUM_BITS {
        return Err(VmError::EnumerationBound(max_code_bits));
    }
    Ok((0..program_count(max_code_bits) as usize).map(|i| program_at(i as u64)))
}
