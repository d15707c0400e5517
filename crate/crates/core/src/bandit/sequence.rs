use super::{ArmId, BanditError};

fn block_len(horizon: usize, num_arms: usize) -> Result<usize, BanditError> {
    if num_arms < 2 {
        return Err(BanditError::InvalidSequence(format!(
            "need at least two arms, got {num_arms}"
        )));
    }
    if horizon == 0 || horizon % num_arms != 0 {
        return Err(BanditError::InvalidSequence(format!(
            "horizon {horizon} is not a positive multiple of {num_arms} arms"
        )));
    }
    Ok(horizon / num_arms)
}

/// `(1, 2, ..., K)` repeated `T / K` times.
pub fn cycle_sequence(horizon: usize, num_arms: usize) -> Result<Vec<ArmId>, BanditError> {
    let m = block_len(horizon, num_arms)?;
    Ok((0..m)
        .flat_map(|_| (0..num_arms).map(ArmId::from_zero_based))
        .collect())
}

/// `(2, 1, 3, 4, ..., K)`: the block order of the REPEAT sequence.
pub fn default_block_order(num_arms: usize) -> Vec<ArmId> {
    let mut order: Vec<ArmId> = (0..num_arms).map(ArmId::from_zero_based).collect();
    if num_arms >= 2 {
        order.swap(0, 1);
    }
    order
}

/// Each arm of `block_order` repeated `T / K` times, blocks concatenated.
pub fn repeat_sequence(
    horizon: usize,
    num_arms: usize,
    block_order: &[ArmId],
) -> Result<Vec<ArmId>, BanditError> {
    let m = block_len(horizon, num_arms)?;
    let mut seen = vec![false; num_arms];
    for &arm in block_order {
        arm.check(num_arms)
            .map_err(|_| BanditError::InvalidSequence(format!("arm {arm} out of range")))?;
        if std::mem::replace(&mut seen[arm.slot()], true) {
            return Err(BanditError::InvalidSequence(format!("arm {arm} repeated in block order")));
        }
    }
    if block_order.len() != num_arms {
        return Err(BanditError::InvalidSequence(format!(
            "block order has {} arms, expected {num_arms}",
            block_order.len()
        )));
    }
    Ok(block_order
        .iter()
        .flat_map(|&arm| std::iter::repeat_n(arm, m))
        .collect())
}
