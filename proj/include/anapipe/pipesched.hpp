// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pipeline schedules and clock-cycle accounting.
//
// One clock cycle is the time a stage needs to push one micro-batch through
// its forward or its backward computation. Stages are numbered 1..M and data
// (micro-batches) 0..K-1.
//
// Asynchronous timetable, one event per stage per cycle in steady state:
//
//     Forward(k, m)  at cycle 2k + m - 1
//     Backward(k, m) at cycle 2k + 2M - m
//
// Forward events at stage m fall on cycles of parity (m - 1) and backward
// events on parity m, so the two never collide. Between Forward(k, m) and
// Backward(k, m) the stage performs exactly M - m other backward events.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace anapipe {

enum class Strategy { NoPipeline, Synchronous, Asynchronous };

std::string strategy_name(Strategy s);
/// Accepts "nopipe", "sync", "async".
Strategy parse_strategy(const std::string& text);

enum class EventKind { Forward, Backward };

struct ScheduleEvent {
    std::uint64_t cycle = 0;
    std::uint32_t stage = 0;  // 1-based
    EventKind kind = EventKind::Forward;
    std::uint64_t datum = 0;

    bool operator==(const ScheduleEvent&) const = default;
};

struct CycleLedger {
    std::uint64_t total_cycles = 0;
    // Stage-cycles spent on forward or backward work.
    std::uint64_t busy_slots = 0;
    // Completed scheduling units (micro-batches); the N_c of the density definition.
    std::uint64_t samples_completed = 0;
    // Start-up and shut-down cycles that a longer run would amortise away.
    std::uint64_t fill_drain_cycles = 0;
    std::uint32_t stages = 0;

    void check() const;
};

std::uint64_t cycles_no_pipeline(std::uint32_t stages, std::uint64_t micro_batches);
/// Cycles for one synchronous mini-batch of B micro-batches: 2(M + B - 1).
std::uint64_t cycles_synchronous(std::uint32_t stages, std::uint64_t micro_batches);
/// Cycles for K micro-batches through the asynchronous pipeline: 2(K - 1) + 2M.
std::uint64_t cycles_asynchronous(std::uint32_t stages, std::uint64_t data);

inline std::uint64_t async_forward_cycle(std::uint64_t k, std::uint32_t m, std::uint32_t /*stages*/) {
    return 2 * k + m - 1;
}
inline std::uint64_t async_backward_cycle(std::uint64_t k, std::uint32_t m, std::uint32_t stages) {
    return 2 * k + 2 * static_cast<std::uint64_t>(stages) - m;
}

/// All 2MK events of the asynchronous pipeline ordered by (cycle, stage).
std::vector<ScheduleEvent> async_event_stream(std::uint32_t stages, std::uint64_t data);

/// Weight version the forward of datum k at stage m reads: max(k - (M - m), 0).
std::uint64_t forward_version(std::uint64_t k, std::uint32_t m, std::uint32_t stages);

CycleLedger ledger_no_pipeline(std::uint32_t stages, std::uint64_t minibatches,
                               std::uint64_t micro_batches);
CycleLedger ledger_synchronous(std::uint32_t stages, std::uint64_t minibatches,
                               std::uint64_t micro_batches);
CycleLedger ledger_asynchronous(std::uint32_t stages, std::uint64_t data);

/// 2 N_c / t
double measured_density(const CycleLedger& ledger);

/// Micro-batches per cycle once fill and drain are excluded.
double steady_throughput(const CycleLedger& ledger);

/// Gantt-style dump with header "cycle,stage,kind,datum".
void write_timeline_csv(std::ostream& os, const std::vector<ScheduleEvent>& events);

}  // namespace anapipe
