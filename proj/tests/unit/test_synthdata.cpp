// Copyright 2026 The anapipe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"

#include "anapipe/errors.hpp"
#include "anapipe/synthdata.hpp"

using namespace anapipe;

namespace {

bool same_dataset(const Dataset& a, const Dataset& b) {
    if (a.size() != b.size() || a.feature_dim != b.feature_dim || a.label_dim != b.label_dim || a.task != b.task) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a.samples[i].x == b.samples[i].x) || !(a.samples[i].y == b.samples[i].y)) {
            return false;
        }
    }
    return true;
}

void check_unit_norm(const Dataset& ds) {
    for (const auto& s : ds.samples) {
        CHECK(std::fabs(norms(s.x).fro - 1.0) <= 1e-9);
    }
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("teacher regression is deterministic and normalized") {
    const Dataset a = gen_teacher_regression(42, 200, 6);
    const Dataset b = gen_teacher_regression(42, 200, 6);
    const Dataset c = gen_teacher_regression(43, 200, 6);
    CHECK(same_dataset(a, b));
    CHECK_FALSE(same_dataset(a, c));
    CHECK(a.task == Task::Regression);
    CHECK(a.label_dim == 1);
    check_unit_norm(a);
    CHECK_NOTHROW(a.validate());
}

TEST_CASE("zero teacher gives zero labels") {
    TeacherSpec t;
    t.weight_scale = 0.0;
    t.stages = 3;
    t.output_dim = 2;
    for (const auto& s : gen_teacher_regression(1, 50, 4, t).samples) {
        CHECK(s.y == Vector(2));
    }
}

TEST_CASE("sphere-uniform features are centred") {
    const std::size_t n = 20000;
    const Dataset ds = gen_teacher_regression(7, n, 5);
    Vector mean(5);
    for (const auto& s : ds.samples) {
        for (std::size_t j = 0; j < 5; ++j) {
            mean[j] += s.x[j] / static_cast<double>(n);
        }
    }
    for (double m : mean) {
        CHECK(std::fabs(m) <= 3.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("gaussian mixture") {
    const Dataset a = gen_gaussian_mixture(3, 400, 8, 3);
    CHECK(same_dataset(a, gen_gaussian_mixture(3, 400, 8, 3)));
    CHECK(a.task == Task::Classification);
    CHECK(a.label_dim == 3);
    check_unit_norm(a);
    std::set<std::size_t> seen;
    for (const auto& s : a.samples) {
        double sum = 0.0;
        std::size_t ones = 0;
        for (std::size_t j = 0; j < s.y.size(); ++j) {
            sum += s.y[j];
            if (s.y[j] == 1.0) {
                ++ones;
                seen.insert(j);
            }
        }
        CHECK(sum == 1.0);
        CHECK(ones == 1);
    }
    CHECK(seen.size() == 3);
    CHECK_THROWS_AS(gen_gaussian_mixture(1, 10, 4, 1), ConfigError);
    CHECK_THROWS_AS(gen_gaussian_mixture(1, 10, 2, 3), ConfigError);
}

TEST_CASE("well separated mixture is linearly learnable") {
    // Plain digital SGD on a linear softmax model, 200 single-sample updates.
    MixtureSpec spec;
    spec.separation = 1.0;
    spec.spread = 0.1;
    const Dataset ds = gen_gaussian_mixture(11, 500, 4, 2, spec);
    Matrix w(2, 4);
    const double alpha = 0.5;
    for (std::size_t k = 0; k < 200; ++k) {
        const auto& s = ds.samples[k % ds.size()];
        const Vector z = matvec(w, s.x);
        const double mx = std::max(z[0], z[1]);
        const double e0 = std::exp(z[0] - mx);
        const double e1 = std::exp(z[1] - mx);
        const Vector p{e0 / (e0 + e1), e1 / (e0 + e1)};
        const Vector d{p[0] - s.y[0], p[1] - s.y[1]};
        w = add_scaled(w, outer(d, s.x), -alpha);
    }
    std::size_t hits = 0;
    for (const auto& s : ds.samples) {
        const Vector z = matvec(w, s.x);
        hits += ((z[1] > z[0]) == (s.y[1] == 1.0)) ? 1 : 0;
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(ds.size()) > 0.95);
}

TEST_CASE("csv load") {
    std::istringstream in("x1,x2,y1\n3,4,0.5\n0,2,-1\n");
    const Dataset ds = load_csv(in);
    REQUIRE(ds.size() == 2);
    CHECK(ds.feature_dim == 2);
    CHECK(ds.label_dim == 1);
    CHECK(ds.task == Task::Regression);
    CHECK(ds.samples[0].x == Vector{0.6, 0.8});
    CHECK(ds.samples[1].y == Vector{-1});

    std::istringstream raw("x1,y1,y2\n2,1,0\n-3,0,1\n");
    const Dataset cls = load_csv(raw, false);
    CHECK(cls.task == Task::Classification);
    CHECK(cls.samples[1].x == Vector{-3});
}

TEST_CASE("csv errors carry line and column") {
    std::istringstream bad_cell("x1,x2,y1\n1,2,3\n1,abc,3\n");
    try {
        load_csv(bad_cell);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
        const std::string msg = e.what();
        CHECK(msg.find("column 2") != std::string::npos);
        CHECK(msg.find("x2") != std::string::npos);
    }
    std::istringstream short_row("x1,x2,y1\n1,2\n");
    CHECK_THROWS_AS(load_csv(short_row), ParseError);
    std::istringstream empty("");
    CHECK_THROWS_AS(load_csv(empty), ParseError);
    std::istringstream header_only("x1,y1\n");
    CHECK_THROWS_AS(load_csv(header_only), ParseError);
    std::istringstream bad_header("a,b\n1,2\n");
    CHECK_THROWS_AS(load_csv(bad_header), ParseError);
}

TEST_CASE("csv round trip") {
    const Dataset ds = gen_gaussian_mixture(5, 64, 5, 2);
    std::stringstream io;
    write_csv(io, ds);
    const Dataset back = load_csv(io, false);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.feature_dim; ++j) {
            CHECK(std::fabs(back.samples[i].x[j] - ds.samples[i].x[j]) <= 1e-12);
        }
        CHECK(back.samples[i].y == ds.samples[i].y);
    }
}

TEST_CASE("batch plan validation") {
    CHECK_NOTHROW(BatchPlan{128, 16, 0}.validate());
    CHECK(BatchPlan{128, 16, 0}.micro_batches() == 8);
    try {
        BatchPlan{10, 3, 0}.validate();
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()) == "B_mini not divisible by B_micro");
    }
    CHECK_THROWS_AS((BatchPlan{4, 0, 0}.validate()), ConfigError);
}

TEST_CASE("batch iterator") {
    const Dataset ds = gen_teacher_regression(1, 128, 3);
    const auto mb = batch_iterator(ds, BatchPlan{128, 16, 9}, 0);
    CHECK(mb.size() == 8);
    for (const auto& b : mb) {
        CHECK(b.size() == 16);
    }
    CHECK(batch_iterator(ds, BatchPlan{8, 8, 9}, 0).size() == 16);

    const Dataset odd = gen_teacher_regression(1, 103, 3);
    const BatchPlan plan{10, 5, 4};
    const auto batches = batch_iterator(odd, plan, 2);
    CHECK(batches.size() == 20);
    const auto perm = epoch_permutation(103, 4, 2);
    std::vector<std::size_t> flat;
    for (const auto& b : batches) {
        flat.insert(flat.end(), b.begin(), b.end());
    }
    CHECK(flat == std::vector<std::size_t>(perm.begin(), perm.begin() + 100));
    CHECK(std::set<std::size_t>(flat.begin(), flat.end()).size() == 100);

    CHECK(batch_iterator(odd, plan, 2) == batches);
    CHECK(batch_iterator(odd, plan, 3) != batches);
}

TEST_CASE("dataset validation") {
    Dataset ds = gen_gaussian_mixture(1, 10, 3, 2);
    CHECK_NOTHROW(ds.validate());
    ds.samples[0].y = Vector{0.5, 0.5};
    CHECK_THROWS_AS(ds.validate(), ConfigError);
    CHECK_THROWS_AS(Dataset{}.validate(), ConfigError);
}

}  // TEST_SUITE
