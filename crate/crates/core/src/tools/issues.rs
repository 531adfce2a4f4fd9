use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::journal::{self, Journal, JournalError, MemoryJournal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueTicket {
    pub id: u64,
    pub reporter_user_id: String,
    pub description: String,
    pub status: IssueStatus,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum IssueError {
    #[error("issue description must not be empty")]
    EmptyDescription,
    #[error("issue #{0} does not exist")]
    NotFound(u64),
    #[error(transparent)]
    Journal(#[from] JournalError),
}

/// Tickets with dense ids starting at 1. The journal holds one full ticket
/// snapshot per line; a later line for the same id replaces the earlier one.
pub struct IssueStore {
    tickets: Mutex<Vec<IssueTicket>>,
    journal: Box<dyn Journal>,
}

impl Default for IssueStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl IssueStore {
    pub fn in_memory() -> Self {
        Self {
            tickets: Mutex::new(Vec::new()),
            journal: Box::new(MemoryJournal::new()),
        }
    }

    pub fn open(journal: Box<dyn Journal>) -> Result<Self, JournalError> {
        let mut tickets: Vec<IssueTicket> = Vec::new();
        for t in journal::replay::<IssueTicket>(journal.as_ref())? {
            let idx = t.id as usize;
            if idx == tickets.len() + 1 {
                tickets.push(t);
            } else if (1..=tickets.len()).contains(&idx) {
                tickets[idx - 1] = t;
            }
        }
        Ok(Self {
            tickets: Mutex::new(tickets),
            journal,
        })
    }

    pub fn create(
        &self,
        reporter: &str,
        description: &str,
        now: DateTime<Utc>,
    ) -> Result<IssueTicket, IssueError> {
        let description = description.trim();
        if description.is_empty() {
            return Err(IssueError::EmptyDescription);
        }
        let mut tickets = self.tickets.lock();
        let ticket = IssueTicket {
            id: tickets.len() as u64 + 1,
            reporter_user_id: reporter.to_owned(),
            description: description.to_owned(),
            status: IssueStatus::Open,
            created_at: now,
        };
        journal::append_record(self.journal.as_ref(), &ticket)?;
        tickets.push(ticket.clone());
        Ok(ticket)
    }

    pub fn set_status(&self, id: u64, status: IssueStatus) -> Result<IssueTicket, IssueError> {
        let mut tickets = self.tickets.lock();
        let slot = id
            .checked_sub(1)
            .and_then(|i| tickets.get_mut(i as usize))
            .ok_or(IssueError::NotFound(id))?;
        let mut updated = slot.clone();
        updated.status = status;
        journal::append_record(self.journal.as_ref(), &updated)?;
        *slot = updated.clone();
        Ok(updated)
    }

    /// Tickets reported by `user`, ascending by id.
    pub fn list_for(&self, user: &str) -> Vec<IssueTicket> {
        self.tickets
            .lock()
            .iter()
            .filter(|t| t.reporter_user_id == user)
            .cloned()
            .collect()
    }

    pub fn all(&self) -> Vec<IssueTicket> {
        self.tickets.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.tickets.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
