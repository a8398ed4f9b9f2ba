#include <gtest/gtest.h>

#include <cmath>

#include "testutil.hpp"
#include "vleto/prototypes.hpp"

using namespace vleto;
namespace tu = vleto::testutil;

namespace {

Prototype proto(int cls, std::initializer_list<double> values, std::size_t task = 0) {
    Prototype p;
    p.class_id = cls;
    p.vector = Matrix(1, values.size());
    std::size_t i = 0;
    for (double v : values) p.vector(0, i++) = v;
    p.source_task = task;
    return p;
}

}  // namespace

TEST(GeneratePrototypes, MeanOfTwoEmbeddings) {
    Matrix emb = Matrix::from_rows({{0, 2}, {2, 0}});
    auto protos = generate_prototypes(emb, {5, 5}, {5}, 0);
    ASSERT_EQ(protos.size(), 1u);
    EXPECT_DOUBLE_EQ(protos[0].vector(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(protos[0].vector(0, 1), 1.0);
}

TEST(GeneratePrototypes, SingleSampleAndIdenticalEmbeddings) {
    Matrix emb = Matrix::from_rows({{3, -1}, {7, 7}, {7, 7}});
    auto protos = generate_prototypes(emb, {0, 1, 1}, {0, 1}, 2);
    EXPECT_DOUBLE_EQ(protos[0].vector(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(protos[0].vector(0, 1), -1.0);
    EXPECT_DOUBLE_EQ(protos[1].vector(0, 0), 7.0);
    EXPECT_EQ(protos[1].source_task, 2u);
}

TEST(GeneratePrototypes, EmptyClassIsAnError) {
    Matrix emb = Matrix::from_rows({{1, 1}});
    EXPECT_THROW(generate_prototypes(emb, {0}, {0, 3}, 0), DomainError);
}

TEST(CosineSim, AnchorValues) {
    EXPECT_DOUBLE_EQ(cosine_sim(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{1, 0}})), 1.0);
    EXPECT_DOUBLE_EQ(cosine_sim(Matrix::from_rows({{1, 0}}), Matrix::from_rows({{0, 1}})), 0.0);
    const double expected = 32.0 / (std::sqrt(14.0) * std::sqrt(77.0));
    EXPECT_NEAR(cosine_sim(Matrix::from_rows({{1, 2, 3}}), Matrix::from_rows({{4, 5, 6}})),
                expected, 1e-12);
}

TEST(CosineSim, ZeroVectorRejected) {
    EXPECT_THROW(cosine_sim(Matrix(1, 3), Matrix::from_rows({{1, 2, 3}})), DomainError);
}

TEST(CosineSim, SymmetryAndScaleInvariance) {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix a = tu::random_matrix(1, 6, rng);
        Matrix b = tu::random_matrix(1, 6, rng);
        const double ab = cosine_sim(a, b);
        EXPECT_NEAR(ab, cosine_sim(b, a), 1e-12);
        const double lambda = 0.01 + 10.0 * rng.uniform01();
        EXPECT_NEAR(ab, cosine_sim(scale(a, lambda), b), 1e-12);
        EXPECT_LE(std::abs(ab), 1.0 + 1e-12);
    }
}

TEST(EvolvePrototype, GammaZeroIsIdentity) {
    Prototype prev = proto(3, {1.5, -2.0});
    std::vector<DriftPair> pairs = {{Matrix::from_rows({{1, 0}}), Matrix::from_rows({{0, 1}})}};
    Prototype out = evolve_class_prototype(prev, pairs, 0.0);
    EXPECT_TRUE(tu::bit_equal(out.vector, prev.vector));
}

TEST(EvolvePrototype, BroadcastsScalarDrift) {
    // one pair with similarity 1: [1,1] + 0.5*1 = [1.5, 1.5]
    Prototype prev = proto(0, {1, 1});
    std::vector<DriftPair> pairs = {{Matrix::from_rows({{2, 0}}), Matrix::from_rows({{4, 0}})}};
    Prototype out = evolve_class_prototype(prev, pairs, 0.5);
    EXPECT_DOUBLE_EQ(out.vector(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(out.vector(0, 1), 1.5);
}

TEST(EvolvePrototype, MeanOverPairs) {
    // similarities {1, 0}, mean 0.5, gamma 1: [2,0] -> [2.5, 0.5]
    Prototype prev = proto(0, {2, 0});
    std::vector<DriftPair> pairs = {
        {Matrix::from_rows({{1, 0}}), Matrix::from_rows({{3, 0}})},
        {Matrix::from_rows({{1, 0}}), Matrix::from_rows({{0, 2}})}};
    Prototype out = evolve_class_prototype(prev, pairs, 1.0);
    EXPECT_DOUBLE_EQ(out.vector(0, 0), 2.5);
    EXPECT_DOUBLE_EQ(out.vector(0, 1), 0.5);
}

TEST(EvolvePrototype, EmptyPairsFallsBack) {
    Prototype prev = proto(1, {4, 4});
    bool fell_back = false;
    Prototype out = evolve_class_prototype(prev, {}, 2.0, &fell_back);
    EXPECT_TRUE(fell_back);
    EXPECT_TRUE(tu::bit_equal(out.vector, prev.vector));
}

TEST(EvolvePrototype, OppositeDriftsCancel) {
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
        Prototype prev = proto(0, {0, 0});
        prev.vector = tu::random_matrix(1, 5, rng);
        Matrix a = tu::random_matrix(1, 5, rng);
        Matrix b = tu::random_matrix(1, 5, rng);
        std::vector<DriftPair> pairs = {{a, b}};
        const double gamma = rng.uniform01() * 3.0;
        Prototype there = evolve_class_prototype(prev, pairs, gamma);
        // applying the negated drift returns the original within 1e-12
        const double sim = cosine_sim(a, b);
        for (std::size_t i = 0; i < there.vector.size(); ++i)
            there.vector.data()[i] -= gamma * sim;
        EXPECT_LT(tu::max_relative_error(there.vector, prev.vector), 1e-12);
    }
}

TEST(FusePrototype, UnknownClassPassesThrough) {
    GlobalPrototypeList list;
    Prototype current = proto(7, {1, 2});
    Prototype out = fuse_feature_prototype(current, list, 0.5);
    EXPECT_TRUE(tu::bit_equal(out.vector, current.vector));
}

TEST(FusePrototype, EndpointsAndMidpoint) {
    GlobalPrototypeList list;
    list.store(proto(0, {0, 2}));
    Prototype current = proto(0, {2, 0});

    Prototype beta1 = fuse_feature_prototype(current, list, 1.0);
    EXPECT_TRUE(tu::bit_equal(beta1.vector, current.vector));

    Prototype beta0 = fuse_feature_prototype(current, list, 0.0);
    EXPECT_TRUE(tu::bit_equal(beta0.vector, list.at(0).vector));

    Prototype mid = fuse_feature_prototype(current, list, 0.5);
    EXPECT_DOUBLE_EQ(mid.vector(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(mid.vector(0, 1), 1.0);
}

TEST(GlobalList, InsertOverwriteAndWalkthrough) {
    GlobalPrototypeList list;
    update_global_list(list, {proto(0, {1, 0}), proto(1, {0, 1}), proto(2, {1, 1})}, {});
    EXPECT_EQ(list.size(), 3u);

    update_global_list(list, {proto(1, {9, 9})}, {});
    EXPECT_DOUBLE_EQ(list.at(1).vector(0, 0), 9.0);

    // CIL walkthrough: tasks {0,1} then {2,3}
    GlobalPrototypeList walk;
    update_global_list(walk, {proto(0, {1, 0}, 0), proto(1, {0, 1}, 0)},
                       {proto(0, {1, 0}, 0), proto(1, {0, 1}, 0)});
    update_global_list(walk, {proto(2, {1, 1}, 1), proto(3, {2, 2}, 1)},
                       {proto(2, {1, 1}, 1), proto(3, {2, 2}, 1)});
    EXPECT_EQ(walk.classes(), (std::vector<int>{0, 1, 2, 3}));
    EXPECT_NE(walk.previous_raw(0), nullptr);
    EXPECT_EQ(walk.previous_raw(7), nullptr);
}

TEST(PrototypeBatch, ExactReplayAndRoundRobin) {
    Rng rng(5);
    PrototypeBatch one = make_prototype_batch({proto(4, {2, 3})}, 4, 0.0, rng);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_DOUBLE_EQ(one.vectors(i, 0), 2.0);
        EXPECT_DOUBLE_EQ(one.vectors(i, 1), 3.0);
        EXPECT_EQ(one.labels[i], 4);
    }

    PrototypeBatch two = make_prototype_batch({proto(0, {1}), proto(1, {2})}, 4, 0.0, rng);
    EXPECT_EQ(two.labels, (std::vector<int>{0, 1, 0, 1}));
}

TEST(PrototypeBatch, JitterIsSeedDeterministic) {
    std::vector<Prototype> protos = {proto(0, {1, 1}), proto(1, {-1, 2})};
    Rng a(77), b(77);
    PrototypeBatch ba = make_prototype_batch(protos, 6, 0.1, a);
    PrototypeBatch bb = make_prototype_batch(protos, 6, 0.1, b);
    EXPECT_TRUE(tu::bit_equal(ba.vectors, bb.vectors));
    EXPECT_FALSE(tu::bit_equal(ba.vectors, make_prototype_batch(protos, 6, 0.0, a).vectors));
}

TEST(PrototypeBatch, Errors) {
    Rng rng(1);
    EXPECT_THROW(make_prototype_batch({}, 4, 0.0, rng), DomainError);
}

// Prototype of a union of classes equals the sample-count-weighted mean of
// the per-class prototypes.
TEST(GeneratePrototypes, UnionEqualsWeightedMeanOfParts) {
    Rng rng(59);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(40);
        const std::size_t d = 1 + rng.index(8);
        Matrix emb = tu::random_matrix(n, d, rng);
        std::vector<int> labels(n);
        for (auto& y : labels) y = static_cast<int>(rng.index(2));
        labels[0] = 0;
        labels[n - 1] = 1;

        auto parts = generate_prototypes(emb, labels, {0, 1}, 0);
        std::vector<int> merged = labels;
        for (auto& y : merged) y = 0;
        auto whole = generate_prototypes(emb, merged, {0}, 0);

        std::size_t n0 = 0;
        for (int y : labels) n0 += y == 0;
        const double w0 = static_cast<double>(n0) / static_cast<double>(n);
        for (std::size_t j = 0; j < d; ++j) {
            const double expected =
                w0 * parts[0].vector(0, j) + (1.0 - w0) * parts[1].vector(0, j);
            EXPECT_NEAR(whole[0].vector(0, j), expected, 1e-10);
        }
    }
}
