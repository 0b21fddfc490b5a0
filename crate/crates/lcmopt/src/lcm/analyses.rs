//! Local properties and the global bit vector analyses of lazy code motion.
//!
//! Each slotted value number owns one bit. The local triple per block
//! (TRANSP, ANTLOC, XCOMP) is read off the leader occurrence of each number:
//! a block is transparent for a number unless it defines one of the leader's
//! operands, and a block's own occurrence is anticipated-local or
//! exit-computed depending on that transparency. On top of the locals run
//! four fixpoint analyses and three set combinations:
//!
//! anticipation (backward) and availability (forward) feed earliest-ness;
//! delayability (forward) pushes earliest points as far down as down-safety
//! allows, giving latest-ness; isolation (backward) masks points whose
//! computed value could never be reused; insert and replace are the final
//! difference sets the rewrite consumes.
//!
//! Complements are relative to the slot universe. An intersection over zero
//! predecessors is the full set (so the entry's earliest-in equals its
//! anticipated-in) and a union over zero successors is empty (an exit block
//! can only be a latest-out point through its own XCOMP bit). Blocks
//! unreachable from the entry take no part in the fixpoints; every global
//! set is forced empty there so the rewrite never touches dead code.

use crate::cfg::CfgInfo;
use crate::dataflow::{
    meet_intersect, solve, BitVector, DataflowSpec, Direction, FlowGraph, NonConvergence,
};
use crate::ir::{Function, Operand};
use crate::lcm::SlotMap;
use crate::vn::ValueTable;

/// The three block-local properties, indexed by block then slot.
#[derive(Debug, Clone)]
pub struct LocalProps {
    pub transp: Vec<BitVector>,
    pub antloc: Vec<BitVector>,
    pub xcomp: Vec<BitVector>,
}

/// Locals from the leader of each slotted number: TRANSP(v, b) is false
/// exactly when b defines an operand of the leader (parameters and literals
/// are never redefined), ANTLOC = Eval ∩ TRANSP, XCOMP = Eval ∩ ¬TRANSP.
pub fn compute_local_properties(f: &Function, table: &ValueTable, slots: &SlotMap) -> LocalProps {
    let n = f.blocks.len();
    let w = slots.width();
    let mut transp = vec![BitVector::full(w); n];
    let mut eval = vec![BitVector::empty(w); n];
    for (s, v) in slots.iter() {
        let leader = table.leader(v).expect("slotted numbers have occurrences");
        let (lb, lp) = f.def_site(leader).expect("leader has a definition");
        for x in f.instr_at(lb, lp).operands() {
            let Operand::Name(x) = x else { continue };
            if f.is_param(x) {
                continue;
            }
            if let Some((db, _)) = f.def_site(x) {
                transp[db].clear(s);
            }
        }
        for occ in table.occurrences(v) {
            let (ob, _) = f.def_site(occ).expect("occurrence has a definition");
            eval[ob].set(s);
        }
    }
    let antloc = eval
        .iter()
        .zip(&transp)
        .map(|(e, t)| e.intersect(t))
        .collect();
    let xcomp = eval.iter().zip(&transp).map(|(e, t)| e.minus(t)).collect();
    LocalProps {
        transp,
        antloc,
        xcomp,
    }
}

/// All nineteen per-block sets, indexed by block then slot.
#[derive(Debug, Clone)]
pub struct LcmSets {
    pub antloc: Vec<BitVector>,
    pub transp: Vec<BitVector>,
    pub xcomp: Vec<BitVector>,
    pub antin: Vec<BitVector>,
    pub antout: Vec<BitVector>,
    pub availin: Vec<BitVector>,
    pub availout: Vec<BitVector>,
    pub earlin: Vec<BitVector>,
    pub earlout: Vec<BitVector>,
    pub delayin: Vec<BitVector>,
    pub delayout: Vec<BitVector>,
    pub latestin: Vec<BitVector>,
    pub latestout: Vec<BitVector>,
    pub isoin: Vec<BitVector>,
    pub isoout: Vec<BitVector>,
    pub insertin: Vec<BitVector>,
    pub insertout: Vec<BitVector>,
    pub replacein: Vec<BitVector>,
    pub replaceout: Vec<BitVector>,
}

impl LcmSets {
    /// All sets with their names, in presentation order for dumps.
    pub fn named(&self) -> [(&'static str, &[BitVector]); 19] {
        [
            ("ANTLOC", &self.antloc),
            ("TRANSP", &self.transp),
            ("XCOMP", &self.xcomp),
            ("ANTIN", &self.antin),
            ("ANTOUT", &self.antout),
            ("AVAILIN", &self.availin),
            ("AVAILOUT", &self.availout),
            ("EARLIN", &self.earlin),
            ("EARLOUT", &self.earlout),
            ("DELAYIN", &self.delayin),
            ("DELAYOUT", &self.delayout),
            ("LATESTIN", &self.latestin),
            ("LATESTOUT", &self.latestout),
            ("ISOIN", &self.isoin),
            ("ISOOUT", &self.isoout),
            ("INSERTIN", &self.insertin),
            ("INSERTOUT", &self.insertout),
            ("REPLACEIN", &self.replacein),
            ("REPLACEOUT", &self.replaceout),
        ]
    }

    /// Structural inclusions that hold in any correct solution, checked at
    /// every block. Returns the first violation as text.
    pub fn check_inclusions(&self) -> Result<(), String> {
        let pairs: [(&str, &[BitVector], &str, &[BitVector]); 6] = [
            ("EARLIN", &self.earlin, "ANTIN", &self.antin),
            ("DELAYIN", &self.delayin, "ANTIN", &self.antin),
            ("LATESTIN", &self.latestin, "DELAYIN", &self.delayin),
            ("LATESTOUT", &self.latestout, "DELAYOUT", &self.delayout),
            ("INSERTIN", &self.insertin, "LATESTIN", &self.latestin),
            ("INSERTOUT", &self.insertout, "LATESTOUT", &self.latestout),
        ];
        for b in 0..self.antloc.len() {
            for (sub_name, sub, sup_name, sup) in &pairs {
                if !sub[b].is_subset(&sup[b]) {
                    return Err(format!("{sub_name} ⊄ {sup_name} at block {b}"));
                }
            }
            if !self.replacein[b].is_subset(&self.antloc[b]) {
                return Err(format!("REPLACEIN ⊄ ANTLOC at block {b}"));
            }
            if !self.replaceout[b].is_subset(&self.xcomp[b]) {
                return Err(format!("REPLACEOUT ⊄ XCOMP at block {b}"));
            }
            if !self.antloc[b].intersect(&self.xcomp[b]).is_empty() {
                return Err(format!("ANTLOC ∩ XCOMP ≠ ∅ at block {b}"));
            }
        }
        Ok(())
    }
}

/// Anticipation (backward): will the value be computed on every path leaving
/// here before its operands change?
///   ANTOUT = XCOMP ∪ (∅ at exits, else ⋂ succ ANTIN)
///   ANTIN  = (TRANSP ∩ ANTOUT) ∪ ANTLOC
pub fn ant_spec<'a>(locals: &'a LocalProps) -> DataflowSpec<'a> {
    let w = width_of(locals);
    DataflowSpec {
        direction: Direction::Backward,
        alpha: Box::new(|b| locals.xcomp[b].clone()),
        beta: Box::new(|sol, s| sol.in_of[s].clone()),
        gamma: Box::new(|sol, b| {
            locals.transp[b]
                .intersect(&sol.out_of[b])
                .union(&locals.antloc[b])
        }),
        meet: meet_intersect,
        bottom: BitVector::empty(w),
        top: BitVector::full(w),
    }
}

/// Availability (forward): has the value been computed on every path
/// reaching here, operands intact since?
///   AVAILIN  = ∅ at the entry, else ⋂ pred (XCOMP ∪ AVAILOUT)
///   AVAILOUT = (ANTLOC ∪ AVAILIN) ∩ TRANSP
pub fn avail_spec<'a>(locals: &'a LocalProps) -> DataflowSpec<'a> {
    let w = width_of(locals);
    DataflowSpec {
        direction: Direction::Forward,
        alpha: Box::new(move |_| BitVector::empty(w)),
        beta: Box::new(|sol, p| locals.xcomp[p].union(&sol.out_of[p])),
        gamma: Box::new(|sol, b| {
            locals.antloc[b]
                .union(&sol.in_of[b])
                .intersect(&locals.transp[b])
        }),
        meet: meet_intersect,
        bottom: BitVector::empty(w),
        top: BitVector::full(w),
    }
}

/// Delayability (forward): an earliest point may slide forward while every
/// path still meets the first use.
///   DELAYIN  = EARLIN ∪ (∅ at the entry, else ⋂ pred (¬XCOMP ∩ DELAYOUT))
///   DELAYOUT = (DELAYIN ∩ ¬ANTLOC) ∪ EARLOUT
pub fn delay_spec<'a>(
    locals: &'a LocalProps,
    earlin: &'a [BitVector],
    earlout: &'a [BitVector],
) -> DataflowSpec<'a> {
    let w = width_of(locals);
    DataflowSpec {
        direction: Direction::Forward,
        alpha: Box::new(|b| earlin[b].clone()),
        beta: Box::new(|sol, p| sol.out_of[p].minus(&locals.xcomp[p])),
        gamma: Box::new(|sol, b| sol.in_of[b].minus(&locals.antloc[b]).union(&earlout[b])),
        meet: meet_intersect,
        bottom: BitVector::empty(w),
        top: BitVector::full(w),
    }
}

/// Isolation (backward): from here on, the only use of the value is the
/// immediately following occurrence; moving it would replace one computation
/// with a store/load pair for no gain.
///   ISOOUT = U at exits, else ⋂ succ ((¬ANTLOC ∩ ISOIN) ∪ EARLIN)
///   ISOIN  = EARLOUT ∪ ISOOUT
pub fn iso_spec<'a>(
    locals: &'a LocalProps,
    earlin: &'a [BitVector],
    earlout: &'a [BitVector],
) -> DataflowSpec<'a> {
    let w = width_of(locals);
    DataflowSpec {
        direction: Direction::Backward,
        alpha: Box::new(move |_| BitVector::empty(w)),
        beta: Box::new(|sol, s| sol.in_of[s].minus(&locals.antloc[s]).union(&earlin[s])),
        gamma: Box::new(|sol, b| earlout[b].union(&sol.out_of[b])),
        meet: meet_intersect,
        bottom: BitVector::full(w),
        top: BitVector::full(w),
    }
}

/// Earliest (no fixpoint): anticipated, and no earlier block already covers
/// it. An empty predecessor set contributes the full set to the meet, and so
/// does an unreachable predecessor, whose solution rows arrive zeroed.
///   EARLIN  = ANTIN ∩ ⋂ pred ¬(AVAILOUT ∪ ANTOUT)
///   EARLOUT = ANTOUT ∩ ¬TRANSP
pub fn earliest(
    cfg: &CfgInfo,
    locals: &LocalProps,
    antin: &[BitVector],
    antout: &[BitVector],
    availout: &[BitVector],
) -> (Vec<BitVector>, Vec<BitVector>) {
    let w = width_of(locals);
    let mut earlin = vec![BitVector::empty(w); locals.transp.len()];
    let mut earlout = earlin.clone();
    for &b in &cfg.rpo {
        let mut fresh = BitVector::full(w);
        for &p in &cfg.preds[b] {
            fresh = fresh.intersect(&availout[p].union(&antout[p]).complement());
        }
        earlin[b] = antin[b].intersect(&fresh);
        earlout[b] = antout[b].minus(&locals.transp[b]);
    }
    (earlin, earlout)
}

fn width_of(locals: &LocalProps) -> usize {
    locals.transp.first().map_or(0, BitVector::width)
}

/// Run the four fixpoint analyses and derive the rest. The entry block is
/// block 0; critical edges must already be split or the latest points can
/// land on edges no block represents.
pub fn run_lcm_analyses(cfg: &CfgInfo, locals: &LocalProps) -> Result<LcmSets, NonConvergence> {
    let n = locals.transp.len();
    let w = width_of(locals);
    let graph = FlowGraph {
        blocks: &cfg.rpo,
        preds: &cfg.preds,
        succs: &cfg.succs,
        entry: 0,
    };
    let none = BitVector::empty(w);
    let zero_unreachable = |sets: &mut [&mut Vec<BitVector>]| {
        for set in sets.iter_mut() {
            for &b in &cfg.unreachable {
                set[b] = BitVector::empty(w);
            }
        }
    };

    let ant = solve(&graph, &ant_spec(locals))?;
    let avail = solve(&graph, &avail_spec(locals))?;

    let mut antin = ant.in_of;
    let mut antout = ant.out_of;
    let mut availin = avail.in_of;
    let mut availout = avail.out_of;
    zero_unreachable(&mut [&mut antin, &mut antout, &mut availin, &mut availout]);

    let (earlin, earlout) = earliest(cfg, locals, &antin, &antout, &availout);

    let delay = solve(&graph, &delay_spec(locals, &earlin, &earlout))?;
    let mut delayin = delay.in_of;
    let mut delayout = delay.out_of;

    // Latest: the far edge of delayability, where some successor (or the
    // block's own exit computation) needs the value now.
    //   LATESTIN  = DELAYIN ∩ ANTLOC
    //   LATESTOUT = DELAYOUT ∩ (XCOMP ∪ ⋃ succ ¬DELAYIN)
    let mut latestin = vec![none.clone(); n];
    let mut latestout = vec![none.clone(); n];
    for &b in &cfg.rpo {
        latestin[b] = delayin[b].intersect(&locals.antloc[b]);
        let mut needed = none.clone();
        for &s in &cfg.succs[b] {
            needed = needed.union(&delayin[s].complement());
        }
        latestout[b] = delayout[b].intersect(&locals.xcomp[b].union(&needed));
    }

    let iso = solve(&graph, &iso_spec(locals, &earlin, &earlout))?;
    let mut isoin = iso.in_of;
    let mut isoout = iso.out_of;
    zero_unreachable(&mut [
        &mut delayin,
        &mut delayout,
        &mut latestin,
        &mut latestout,
        &mut isoin,
        &mut isoout,
    ]);

    // The rewrite sets: insert at latest points that are not isolated,
    // replace occurrences whose latest point is not isolated at them.
    //   INSERT  = LATEST ∩ ¬ISO
    //   REPLACEIN = ANTLOC ∩ ¬(LATESTIN ∩ ISOIN), and dually at OUT.
    let mut insertin = vec![none.clone(); n];
    let mut insertout = vec![none.clone(); n];
    let mut replacein = vec![none.clone(); n];
    let mut replaceout = vec![none.clone(); n];
    for &b in &cfg.rpo {
        insertin[b] = latestin[b].minus(&isoin[b]);
        insertout[b] = latestout[b].minus(&isoout[b]);
        replacein[b] = locals.antloc[b].minus(&latestin[b].intersect(&isoin[b]));
        replaceout[b] = locals.xcomp[b].minus(&latestout[b].intersect(&isoout[b]));
    }

    Ok(LcmSets {
        antloc: locals.antloc.clone(),
        transp: locals.transp.clone(),
        xcomp: locals.xcomp.clone(),
        antin,
        antout,
        availin,
        availout,
        earlin,
        earlout,
        delayin,
        delayout,
        latestin,
        latestout,
        isoin,
        isoout,
        insertin,
        insertout,
        replacein,
        replaceout,
    })
}
