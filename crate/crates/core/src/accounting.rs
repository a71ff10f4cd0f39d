//! Append-only ledger for success payments, fine cascades and backbone
//! bypass charges. Money only ever moves between accounts, so balances
//! always sum to zero.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::auction::{HopContract, PacketId};
use crate::money::Money;
use crate::topology::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Account {
    Node(NodeId),
    /// The network operator; receives every bypass charge.
    Operator,
}

impl fmt::Display for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Account::Node(n) => write!(f, "{n}"),
            Account::Operator => f.write_str("operator"),
        }
    }
}

impl FromStr for Account {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "operator" {
            return Ok(Account::Operator);
        }
        s.parse::<u32>()
            .map(|n| Account::Node(NodeId(n)))
            .map_err(|_| format!("invalid account {s:?}"))
    }
}

impl Serialize for Account {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Account {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferReason {
    SuccessPayment,
    Fine,
    BypassCharge,
}

impl fmt::Display for TransferReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferReason::SuccessPayment => "success_payment",
            TransferReason::Fine => "fine",
            TransferReason::BypassCharge => "bypass_charge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub packet_id: PacketId,
    pub reason: TransferReason,
    pub payer: Account,
    pub payee: Account,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("unknown account {0}")]
    UnknownAccount(Account),
    #[error("negative transfer amount {0}")]
    NegativeAmount(Money),
    #[error("contract chain broken at hop {index}: upstream {got} does not follow downstream {expected}")]
    BrokenChain { index: usize, expected: NodeId, got: NodeId },
    #[error("fine monotonicity violated at hop {index}: {fine} after {previous}")]
    FineIncreased { index: usize, fine: Money, previous: Money },
    #[error("node {0} appears twice as downstream")]
    Loop(NodeId),
    #[error("contract {index} belongs to packet {got}, expected {expected}")]
    MixedPackets { index: usize, expected: PacketId, got: PacketId },
}

/// Checks that contracts form one connected, loop-free chain with
/// non-increasing fines.
pub fn validate_chain(chain: &[HopContract]) -> Result<(), LedgerError> {
    let mut seen = Vec::with_capacity(chain.len());
    for (index, c) in chain.iter().enumerate() {
        for amount in [c.price, c.fine] {
            if amount.is_negative() {
                return Err(LedgerError::NegativeAmount(amount));
            }
        }
        if c.packet != chain[0].packet {
            return Err(LedgerError::MixedPackets { index, expected: chain[0].packet, got: c.packet });
        }
        if index > 0 {
            let prev = &chain[index - 1];
            if c.upstream != prev.downstream {
                return Err(LedgerError::BrokenChain { index, expected: prev.downstream, got: c.upstream });
            }
            if c.fine > prev.fine {
                return Err(LedgerError::FineIncreased { index, fine: c.fine, previous: prev.fine });
            }
        }
        if seen.contains(&c.downstream) || c.downstream == c.upstream {
            return Err(LedgerError::Loop(c.downstream));
        }
        seen.push(c.downstream);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    transfers: Vec<Transfer>,
    balances: BTreeMap<Account, Money>,
}

impl Ledger {
    /// Fresh ledger with a zero balance for each node and the operator.
    pub fn new(nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let balances = nodes
            .into_iter()
            .map(Account::Node)
            .chain([Account::Operator])
            .map(|a| (a, Money::ZERO))
            .collect();
        Ledger { transfers: Vec::new(), balances }
    }

    /// Rebuilds a ledger by replaying recorded transfers.
    pub fn replay(
        nodes: impl IntoIterator<Item = NodeId>,
        transfers: impl IntoIterator<Item = Transfer>,
    ) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::new(nodes);
        for t in transfers {
            ledger.record(t)?;
        }
        Ok(ledger)
    }

    pub fn transfers(&self) -> &[Transfer] {
        &self.transfers
    }

    pub fn balances(&self) -> &BTreeMap<Account, Money> {
        &self.balances
    }

    pub fn balance(&self, account: Account) -> Result<Money, LedgerError> {
        self.balances
            .get(&account)
            .copied()
            .ok_or(LedgerError::UnknownAccount(account))
    }

    pub fn total(&self) -> Money {
        self.balances.values().sum()
    }

    pub fn record(&mut self, t: Transfer) -> Result<(), LedgerError> {
        if t.amount.is_negative() {
            return Err(LedgerError::NegativeAmount(t.amount));
        }
        for acct in [t.payer, t.payee] {
            if !self.balances.contains_key(&acct) {
                return Err(LedgerError::UnknownAccount(acct));
            }
        }
        *self.balances.get_mut(&t.payer).unwrap() -= t.amount;
        *self.balances.get_mut(&t.payee).unwrap() += t.amount;
        self.transfers.push(t);
        Ok(())
    }

    fn record_all(&mut self, batch: Vec<Transfer>) -> Result<(), LedgerError> {
        // all-or-nothing: check accounts before touching balances
        for t in &batch {
            for acct in [t.payer, t.payee] {
                if !self.balances.contains_key(&acct) {
                    return Err(LedgerError::UnknownAccount(acct));
                }
            }
        }
        for t in batch {
            self.record(t)?;
        }
        Ok(())
    }

    /// Each upstream pays its downstream the accepted price.
    pub fn settle_success(&mut self, chain: &[HopContract]) -> Result<(), LedgerError> {
        validate_chain(chain)?;
        let batch = chain
            .iter()
            .map(|c| Transfer {
                packet_id: c.packet,
                reason: TransferReason::SuccessPayment,
                payer: Account::Node(c.upstream),
                payee: Account::Node(c.downstream),
                amount: c.price,
            })
            .collect();
        self.record_all(batch)
    }

    /// Every downstream pays its upstream the agreed fine.
    pub fn settle_failure(&mut self, chain: &[HopContract]) -> Result<(), LedgerError> {
        validate_chain(chain)?;
        let batch = chain
            .iter()
            .map(|c| Transfer {
                packet_id: c.packet,
                reason: TransferReason::Fine,
                payer: Account::Node(c.downstream),
                payee: Account::Node(c.upstream),
                amount: c.fine,
            })
            .collect();
        self.record_all(batch)
    }

    /// Backbone delivery costs the packet's original budget.
    pub fn settle_bypass(
        &mut self,
        node: NodeId,
        packet: PacketId,
        original_budget: Money,
    ) -> Result<(), LedgerError> {
        self.record(Transfer {
            packet_id: packet,
            reason: TransferReason::BypassCharge,
            payer: Account::Node(node),
            payee: Account::Operator,
            amount: original_budget,
        })
    }
}

pub const TRANSFER_COLUMNS: [&str; 5] = ["packet_id", "reason", "payer", "payee", "amount"];

pub fn write_transfers_csv<W: Write>(out: W, transfers: &[Transfer]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(TRANSFER_COLUMNS)?;
    for t in transfers {
        w.write_record([
            t.packet_id.to_string(),
            t.reason.to_string(),
            t.payer.to_string(),
            t.payee.to_string(),
            t.amount.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
