// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include "anapipe/pipesched.hpp"

#include <algorithm>
#include <ostream>

#include "anapipe/errors.hpp"

namespace anapipe {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::NoPipeline:
            return "nopipe";
        case Strategy::Synchronous:
            return "sync";
        case Strategy::Asynchronous:
            return "async";
    }
    return "?";
}

Strategy parse_strategy(const std::string& text) {
    if (text == "nopipe") {
        return Strategy::NoPipeline;
    }
    if (text == "sync") {
        return Strategy::Synchronous;
    }
    if (text == "async") {
        return Strategy::Asynchronous;
    }
    throw ConfigError("unknown schedule '" + text + "' (expected nopipe, sync or async)");
}

void CycleLedger::check() const {
    if (busy_slots > total_cycles * stages) {
        throw InvariantViolation("ledger: more busy slots than stage-cycles");
    }
    if (fill_drain_cycles > total_cycles) {
        throw InvariantViolation("ledger: fill/drain exceeds total cycles");
    }
}

std::uint64_t cycles_no_pipeline(std::uint32_t stages, std::uint64_t micro_batches) {
    if (stages == 0) {
        throw ConfigError("cycles_no_pipeline: need at least one stage");
    }
    return 2 * static_cast<std::uint64_t>(stages) * micro_batches;
}

std::uint64_t cycles_synchronous(std::uint32_t stages, std::uint64_t micro_batches) {
    if (stages == 0 || micro_batches == 0) {
        throw ConfigError("cycles_synchronous: need M >= 1 and B >= 1");
    }
    return 2 * (static_cast<std::uint64_t>(stages) + micro_batches - 1);
}

std::uint64_t cycles_asynchronous(std::uint32_t stages, std::uint64_t data) {
    if (stages == 0) {
        throw ConfigError("cycles_asynchronous: need at least one stage");
    }
    if (data == 0) {
        return 0;
    }
    return 2 * (data - 1) + 2 * static_cast<std::uint64_t>(stages);
}

std::vector<ScheduleEvent> async_event_stream(std::uint32_t stages, std::uint64_t data) {
    if (stages == 0 || data == 0) {
        throw ConfigError("async_event_stream: need M >= 1 and K >= 1");
    }
    std::vector<ScheduleEvent> events;
    events.reserve(2 * stages * data);
    for (std::uint64_t k = 0; k < data; ++k) {
        for (std::uint32_t m = 1; m <= stages; ++m) {
            events.push_back({async_forward_cycle(k, m, stages), m, EventKind::Forward, k});
            events.push_back({async_backward_cycle(k, m, stages), m, EventKind::Backward, k});
        }
    }
    std::sort(events.begin(), events.end(), [](const ScheduleEvent& a, const ScheduleEvent& b) {
        if (a.cycle != b.cycle) {
            return a.cycle < b.cycle;
        }
        return a.stage < b.stage;
    });
    return events;
}

std::uint64_t forward_version(std::uint64_t k, std::uint32_t m, std::uint32_t stages) {
    if (m == 0 || m > stages) {
        throw ConfigError("forward_version: stage out of range");
    }
    const std::uint64_t lag = stages - m;
    return k > lag ? k - lag : 0;
}

CycleLedger ledger_no_pipeline(std::uint32_t stages, std::uint64_t minibatches,
                               std::uint64_t micro_batches) {
    CycleLedger l;
    l.stages = stages;
    l.samples_completed = minibatches * micro_batches;
    l.total_cycles = cycles_no_pipeline(stages, l.samples_completed);
    l.busy_slots = 2 * static_cast<std::uint64_t>(stages) * l.samples_completed;
    return l;
}

CycleLedger ledger_synchronous(std::uint32_t stages, std::uint64_t minibatches,
                               std::uint64_t micro_batches) {
    CycleLedger l;
    l.stages = stages;
    l.samples_completed = minibatches * micro_batches;
    l.total_cycles = minibatches * cycles_synchronous(stages, micro_batches);
    l.busy_slots = 2 * static_cast<std::uint64_t>(stages) * l.samples_completed;
    return l;
}

CycleLedger ledger_asynchronous(std::uint32_t stages, std::uint64_t data) {
    CycleLedger l;
    l.stages = stages;
    l.samples_completed = data;
    l.total_cycles = cycles_asynchronous(stages, data);
    l.busy_slots = 2 * static_cast<std::uint64_t>(stages) * data;
    l.fill_drain_cycles = data == 0 ? 0 : 2 * (static_cast<std::uint64_t>(stages) - 1);
    return l;
}

double measured_density(const CycleLedger& ledger) {
    if (ledger.total_cycles == 0) {
        throw ConfigError("measured_density: no cycles elapsed");
    }
    return 2.0 * static_cast<double>(ledger.samples_completed) /
           static_cast<double>(ledger.total_cycles);
}

double steady_throughput(const CycleLedger& ledger) {
    const std::uint64_t steady = ledger.total_cycles - ledger.fill_drain_cycles;
    if (steady == 0) {
        throw ConfigError("steady_throughput: no steady-state cycles");
    }
    return static_cast<double>(ledger.samples_completed) / static_cast<double>(steady);
}

void write_timeline_csv(std::ostream& os, const std::vector<ScheduleEvent>& events) {
    os << "cycle,stage,kind,datum\n";
    for (const auto& e : events) {
        os << e.cycle << ',' << e.stage << ',' << (e.kind == EventKind::Forward ? 'F' : 'B') << ','
           << e.datum << '\n';
    }
}

}  // namespace anapipe
