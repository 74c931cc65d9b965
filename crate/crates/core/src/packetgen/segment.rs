use alloc::boxed::Box;
use alloc::vec::Vec;

use super::blueprint::{PacketBlueprint, Payload};
use super::PacketError;
use crate::model::Name;

/// Segmentation expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Const(u64),
    /// Field of the blueprint being segmented.
    Bp(Name),
    /// Field of the previous, already materialized packet.
    Prev(Name),
    PrevPayloadLen,
    Add(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    /// `prev.hdr.<field> + prev.payload_len`, the usual running offset.
    pub fn running(field: Name) -> Expr {
        Expr::add(Expr::Prev(field), Expr::PrevPayloadLen)
    }

    pub fn uses_prev(&self) -> bool {
        match self {
            Expr::Prev(_) | Expr::PrevPayloadLen => true,
            Expr::Add(a, b) => a.uses_prev() || b.uses_prev(),
            Expr::Const(_) | Expr::Bp(_) => false,
        }
    }
}

/// Evaluates `expr` with wrap-around at `bits`.
pub fn eval_seg_expr(
    expr: &Expr,
    bp: &PacketBlueprint,
    prev: Option<&PacketBlueprint>,
    bits: u8,
) -> Result<u64, PacketError> {
    let raw = eval(expr, bp, prev)?;
    Ok(raw & super::blueprint::width_mask(bits))
}

fn eval(expr: &Expr, bp: &PacketBlueprint, prev: Option<&PacketBlueprint>) -> Result<u64, PacketError> {
    match expr {
        Expr::Const(v) => Ok(*v),
        Expr::Bp(f) => bp.get(f).ok_or(PacketError::ExprError(f)),
        Expr::Prev(f) => prev
            .ok_or(PacketError::PrevUnavailable)?
            .get(f)
            .ok_or(PacketError::ExprError(f)),
        Expr::PrevPayloadLen => Ok(prev.ok_or(PacketError::PrevUnavailable)?.payload_len()),
        Expr::Add(a, b) => Ok(eval(a, bp, prev)?.wrapping_add(eval(b, bp, prev)?)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldRule {
    pub field: Name,
    pub first: Expr,
    pub mid: Expr,
    pub last: Expr,
    /// Used when the blueprint yields a single packet. Defaults to `first`.
    pub only: Option<Expr>,
}

impl FieldRule {
    pub fn new(field: Name, first: Expr, mid: Expr, last: Expr) -> Self {
        FieldRule {
            field,
            first,
            mid,
            last,
            only: None,
        }
    }

    pub fn only(mut self, e: Expr) -> Self {
        self.only = Some(e);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegRule {
    pub id: u16,
    pub fields: Vec<FieldRule>,
}

impl SegRule {
    pub fn new(id: u16, fields: Vec<FieldRule>) -> Self {
        SegRule { id, fields }
    }

    /// `prev.*` may not appear in `first`.
    pub fn validate(&self) -> Result<(), PacketError> {
        for r in &self.fields {
            if r.first.uses_prev() {
                return Err(PacketError::ExprError(r.field));
            }
        }
        Ok(())
    }
}

/// Expands a blueprint into one blueprint per packet. A Data payload of `len`
/// bytes becomes `ceil(len / max_payload)` packets (at least one); other
/// payloads stay in a single packet.
pub fn segment(
    bp: &PacketBlueprint,
    rule: Option<&SegRule>,
    max_payload: u64,
) -> Result<Vec<PacketBlueprint>, PacketError> {
    let max_payload = max_payload.max(1);
    let (n, data) = match &bp.payload {
        Payload::Data(d) => (d.len.div_ceil(max_payload).max(1), Some(*d)),
        _ => (1, None),
    };
    let mut out: Vec<PacketBlueprint> = Vec::with_capacity(n as usize);
    for i in 0..n {
        let mut pkt = bp.clone();
        if let (Some(d), Payload::Data(pd)) = (data, &mut pkt.payload) {
            let start = i * max_payload;
            pd.offset = d.offset + start;
            pd.len = (d.len - start).min(max_payload);
            if d.len == 0 {
                pd.len = 0;
            }
        }
        if let Some(rule) = rule {
            let prev = out.last();
            for fr in &rule.fields {
                let expr = if n == 1 {
                    fr.only.as_ref().unwrap_or(&fr.first)
                } else if i == 0 {
                    &fr.first
                } else if i == n - 1 {
                    &fr.last
                } else {
                    &fr.mid
                };
                let bits = bp
                    .header
                    .iter()
                    .chain(bp.options.iter())
                    .find(|f| f.name == fr.field)
                    .map(|f| f.bits)
                    .ok_or(PacketError::ExprError(fr.field))?;
                let v = eval_seg_expr(expr, bp, prev, bits)?;
                pkt.set_mut(fr.field, v)?;
            }
        }
        out.push(pkt);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruction::Uid;
    use crate::packetgen::blueprint::HeaderLayout;

    const TCPISH: HeaderLayout = HeaderLayout::new("t", &[("seq_no", 32), ("flags", 16), ("pad", 16)]);
    const ROCE: HeaderLayout = HeaderLayout::new("r", &[("bth_opcode", 8), ("psn", 24)]);

    fn seq_rule() -> SegRule {
        SegRule::new(
            1,
            alloc::vec![FieldRule::new(
                "seq_no",
                Expr::Bp("seq_no"),
                Expr::running("seq_no"),
                Expr::running("seq_no"),
            )],
        )
    }

    #[test]
    fn tcp_seq_rule_three_segments() {
        let bp = TCPISH.blueprint().set("seq_no", 1000).data(Uid(0), 0, 3 * 1460, 1460);
        let pkts = segment(&bp, Some(&seq_rule()), 1460).unwrap();
        let seqs: Vec<u64> = pkts.iter().map(|p| p.get("seq_no").unwrap()).collect();
        assert_eq!(seqs, [1000, 2460, 3920]);
        assert!(pkts.iter().all(|p| p.payload_len() == 1460));
    }

    #[test]
    fn seq_wraps_at_field_width() {
        let bp = TCPISH.blueprint().set("seq_no", 0xffff_ff00).data(Uid(0), 0, 2 * 1460, 1460);
        let pkts = segment(&bp, Some(&seq_rule()), 1460).unwrap();
        assert_eq!(pkts[1].get("seq_no"), Some((0xffff_ff00u64 + 1460) & 0xffff_ffff));
    }

    #[test]
    fn roce_opcodes() {
        let rule = SegRule::new(
            2,
            alloc::vec![FieldRule::new("bth_opcode", Expr::Const(0), Expr::Const(1), Expr::Const(2))
                .only(Expr::Const(4))],
        );
        let bp = ROCE.blueprint().data(Uid(0), 0, 3000, 1024);
        let ops: Vec<u64> = segment(&bp, Some(&rule), 1024)
            .unwrap()
            .iter()
            .map(|p| p.get("bth_opcode").unwrap())
            .collect();
        assert_eq!(ops, [0, 1, 2]);
        let single = ROCE.blueprint().data(Uid(0), 0, 100, 1024);
        assert_eq!(segment(&single, Some(&rule), 1024).unwrap()[0].get("bth_opcode"), Some(4));
    }

    #[test]
    fn small_payload_uses_first_without_only() {
        let bp = TCPISH.blueprint().set("seq_no", 5).data(Uid(0), 0, 100, 1460);
        let pkts = segment(&bp, Some(&seq_rule()), 1460).unwrap();
        assert_eq!(pkts.len(), 1);
        assert_eq!(pkts[0].get("seq_no"), Some(5));
        assert_eq!(pkts[0].payload_len(), 100);
    }

    #[test]
    fn eval_examples() {
        let bp = TCPISH.blueprint().set("seq_no", 2460);
        let prev = TCPISH.blueprint().data(Uid(0), 0, 1460, 1460);
        assert_eq!(eval_seg_expr(&Expr::Const(7), &bp, None, 32).unwrap(), 7);
        assert_eq!(eval_seg_expr(&Expr::PrevPayloadLen, &bp, Some(&prev), 32).unwrap(), 1460);
        let e = Expr::add(Expr::Bp("seq_no"), Expr::PrevPayloadLen);
        assert_eq!(eval_seg_expr(&e, &bp, Some(&prev), 32).unwrap(), 3920);
        assert_eq!(eval_seg_expr(&Expr::Bp("nope"), &bp, None, 32), Err(PacketError::ExprError("nope")));
        assert_eq!(eval_seg_expr(&Expr::PrevPayloadLen, &bp, None, 32), Err(PacketError::PrevUnavailable));
    }

    #[test]
    fn prev_in_first_is_invalid() {
        let bad = SegRule::new(9, alloc::vec![FieldRule::new("seq_no", Expr::PrevPayloadLen, Expr::Const(0), Expr::Const(0))]);
        assert!(bad.validate().is_err());
        assert!(seq_rule().validate().is_ok());
    }
}
