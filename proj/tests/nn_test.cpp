#include <gtest/gtest.h>

#include <cmath>

#include "testutil.hpp"
#include "vleto/checkpoint.hpp"
#include "vleto/nn.hpp"

using namespace vleto;
namespace tu = vleto::testutil;

namespace {

DenseNet identity_net(std::size_t dim, Activation act = Activation::Identity) {
    Layer l;
    l.weight = Matrix(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) l.weight(i, i) = 1.0;
    l.bias = Matrix(1, dim);
    l.act = act;
    return DenseNet::from_layers({l});
}

double ce_loss(DenseNet& net, const Matrix& batch, const std::vector<int>& labels) {
    return softmax_cross_entropy(net.forward(batch), labels).loss;
}

}  // namespace

TEST(Matrix, HandProduct) {
    Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    Matrix b = Matrix::from_rows({{7, 8}, {9, 10}, {11, 12}});
    Matrix c = matmul(a, b);
    EXPECT_DOUBLE_EQ(c(0, 0), 58.0);
    EXPECT_DOUBLE_EQ(c(0, 1), 64.0);
    EXPECT_DOUBLE_EQ(c(1, 0), 139.0);
    EXPECT_DOUBLE_EQ(c(1, 1), 154.0);
}

TEST(Matrix, ShapeAndFiniteErrors) {
    Matrix a(2, 3), b(4, 2);
    EXPECT_THROW(matmul(a, b), ShapeError);
    EXPECT_THROW(add(a, b), ShapeError);

    Matrix bad(1, 2, 1.0);
    bad(0, 1) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(scale(bad, 2.0), DomainError);
}

TEST(Forward, IdentitySingleLayer) {
    DenseNet net = identity_net(2);
    Matrix out = net.forward(Matrix::from_rows({{1, 2}}));
    EXPECT_DOUBLE_EQ(out(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(out(0, 1), 2.0);
}

TEST(Forward, ReluClampsNegatives) {
    DenseNet net = identity_net(2, Activation::ReLU);
    Matrix out = net.forward(Matrix::from_rows({{-1, 3}}));
    EXPECT_DOUBLE_EQ(out(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(out(0, 1), 3.0);
}

TEST(Forward, HandComputedAffine) {
    Layer l;
    l.weight = Matrix::from_rows({{1}, {1}});
    l.bias = Matrix::from_rows({{0.5}});
    l.act = Activation::Identity;
    DenseNet net = DenseNet::from_layers({l});
    Matrix out = net.forward(Matrix::from_rows({{1, 2}}));
    EXPECT_DOUBLE_EQ(out(0, 0), 3.5);
}

TEST(Forward, RejectsBadWidth) {
    DenseNet net = identity_net(2);
    EXPECT_THROW(net.forward(Matrix(1, 3)), ShapeError);
}

TEST(SoftmaxCrossEntropy, UniformLogits) {
    SoftmaxLoss r = softmax_cross_entropy(Matrix::from_rows({{0, 0}}), {0});
    EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
}

TEST(SoftmaxCrossEntropy, DominantLogitIsStable) {
    SoftmaxLoss r = softmax_cross_entropy(Matrix::from_rows({{1000, 0}}), {0});
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(SoftmaxCrossEntropy, ClosedFormTwoLogits) {
    // -log softmax([1,2])[1] = log(1 + e^-1)
    SoftmaxLoss r = softmax_cross_entropy(Matrix::from_rows({{1, 2}}), {1});
    EXPECT_NEAR(r.loss, std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(SoftmaxCrossEntropy, LabelOutOfRange) {
    EXPECT_THROW(softmax_cross_entropy(Matrix::from_rows({{0, 0}}), {2}), DomainError);
    EXPECT_THROW(softmax_cross_entropy(Matrix::from_rows({{0, 0}}), {0, 1}), ShapeError);
}

TEST(SoftmaxCrossEntropy, RowsSumToOneAndLossNonNegative) {
    Rng rng(7);
    for (int n = 0; n < 20; ++n) {
        Matrix logits = tu::random_matrix(5, 8, rng, 3.0);
        Matrix probs = softmax(logits);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < probs.cols(); ++c) sum += probs(r, c);
            EXPECT_NEAR(sum, 1.0, 1e-9);
        }
        std::vector<int> labels(5);
        for (auto& y : labels) y = static_cast<int>(rng.index(8));
        EXPECT_GE(softmax_cross_entropy(logits, labels).loss, 0.0);
    }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
    Rng rng(3);
    DenseNet net(4, {6}, 3, rng);
    net.forward(tu::random_matrix(5, 4, rng));
    GradientSet g = net.backward(Matrix(5, 3));
    for (const auto& w : g.params.weight)
        for (double v : w.data()) EXPECT_DOUBLE_EQ(v, 0.0);
    for (double v : g.input_gradient.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Backward, LinearLayerClosedForm) {
    // y = xW, upstream gradient 1: dW = x^T.
    Layer l;
    l.weight = Matrix::from_rows({{0.0}, {0.0}});
    l.bias = Matrix(1, 1);
    l.act = Activation::Identity;
    DenseNet net = DenseNet::from_layers({l});
    net.forward(Matrix::from_rows({{2.0, -3.0}}));
    GradientSet g = net.backward(Matrix::from_rows({{1.0}}));
    EXPECT_DOUBLE_EQ(g.params.weight[0](0, 0), 2.0);
    EXPECT_DOUBLE_EQ(g.params.weight[0](1, 0), -3.0);
    EXPECT_DOUBLE_EQ(g.params.bias[0](0, 0), 1.0);
}

TEST(Backward, RequiresCachedForward) {
    Rng rng(3);
    DenseNet net(2, {}, 2, rng);
    EXPECT_THROW(net.backward(Matrix(1, 2)), StateError);
    net.forward(Matrix(1, 2));
    net.clear_cache();
    EXPECT_THROW(net.backward(Matrix(1, 2)), StateError);
}

TEST(Backward, MatchesFiniteDifferences) {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        DenseNet net(6, {10, 8}, 4, rng);
        Matrix batch = tu::random_matrix(7, 6, rng);
        std::vector<int> labels(7);
        for (auto& y : labels) y = static_cast<int>(rng.index(4));

        SoftmaxLoss sl = softmax_cross_entropy(net.forward(batch), labels);
        GradientSet g = net.backward(sl.dlogits);

        ParamSet fd = tu::finite_difference_gradients(
            net, [&](DenseNet& n) { return ce_loss(n, batch, labels); });
        EXPECT_LT(tu::max_relative_error(g.params, fd), 1e-4) << "trial " << trial;

        Matrix fd_input = tu::finite_difference_input_gradient(
            net, batch, [&](DenseNet& n, const Matrix& b) { return ce_loss(n, b, labels); });
        EXPECT_LT(tu::max_relative_error(g.input_gradient, fd_input), 1e-4);
    }
}

TEST(SgdStep, MaskedUpdateHandCase) {
    Layer l;
    l.weight = Matrix::from_rows({{10.0}, {20.0}});
    l.bias = Matrix(1, 1);
    l.act = Activation::Identity;
    DenseNet net = DenseNet::from_layers({l});

    GradientSet g;
    g.params.weight = {Matrix::from_rows({{1.0}, {1.0}})};
    g.params.bias = {Matrix(1, 1)};

    FreezeMask mask;
    mask.weight = {{1, 0}};
    mask.bias = {{0}};
    sgd_step(net, g, 1.0, &mask);
    EXPECT_DOUBLE_EQ(net.layer(0).weight(0, 0), 10.0);
    EXPECT_DOUBLE_EQ(net.layer(0).weight(1, 0), 19.0);
}

TEST(SgdStep, FullFreezeLeavesNetBitUnchanged) {
    Rng rng(5);
    DenseNet net(3, {4}, 2, rng);
    DenseNet before = net;
    net.forward(tu::random_matrix(4, 3, rng));
    GradientSet g = net.backward(tu::random_matrix(4, 2, rng));

    FreezeMask mask;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        mask.weight.emplace_back(net.layer(l).weight.size(), 1);
        mask.bias.emplace_back(net.layer(l).bias.size(), 1);
    }
    sgd_step(net, g, 0.1, &mask);
    EXPECT_TRUE(tu::bit_equal(before, net));
}

TEST(SgdStep, RejectsBadInputs) {
    Rng rng(5);
    DenseNet net(3, {}, 2, rng);
    net.forward(Matrix(1, 3));
    GradientSet g = net.backward(Matrix(1, 2));
    EXPECT_THROW(sgd_step(net, g, 0.0), ConfigError);
    GradientSet wrong = g;
    wrong.params.weight[0] = Matrix(4, 2);
    EXPECT_THROW(sgd_step(net, wrong, 0.1), ShapeError);
}

TEST(Determinism, SameSeedSameParamsAfterTraining) {
    auto train = [](std::uint64_t seed) {
        Rng rng(seed);
        DenseNet net(4, {8}, 3, rng);
        Matrix batch = tu::random_matrix(6, 4, rng);
        std::vector<int> labels = {0, 1, 2, 0, 1, 2};
        for (int step = 0; step < 25; ++step) {
            SoftmaxLoss sl = softmax_cross_entropy(net.forward(batch), labels);
            sgd_step(net, net.backward(sl.dlogits), 1e-3);
        }
        return net;
    };
    EXPECT_TRUE(tu::bit_equal(train(42), train(42)));
}

TEST(Checkpoint, HexJsonRoundTripsBitExactly) {
    Rng rng(9);
    DenseNet net(5, {7}, 3, rng);
    net.layer(0).weight(0, 0) = -0.0;  // signed zero must survive
    net.layer(0).weight(1, 0) = 1e-310;  // subnormal must survive
    tu::TempDir dir("ckpt");
    const std::string path = (dir.path() / "net.json").string();
    save_checkpoint(net, path);
    DenseNet loaded = load_checkpoint(path);
    EXPECT_TRUE(tu::bit_equal(net, loaded));
    EXPECT_EQ(loaded.layer(0).act, Activation::ReLU);
}

TEST(Resize, GrowOutputPreservesOldClassColumns) {
    Rng rng(13);
    DenseNet net(4, {6}, 2, rng);
    const Matrix old_w = net.layer(1).weight;
    const Matrix old_b = net.layer(1).bias;
    net.grow_output(5, rng);
    EXPECT_EQ(net.output_dim(), 5u);
    for (std::size_t r = 0; r < old_w.rows(); ++r)
        for (std::size_t c = 0; c < old_w.cols(); ++c)
            EXPECT_EQ(net.layer(1).weight(r, c), old_w(r, c));
    for (std::size_t c = 0; c < old_b.cols(); ++c)
        EXPECT_EQ(net.layer(1).bias(0, c), old_b(0, c));
}

TEST(Resize, GrowInputPreservesSurvivingRows) {
    Rng rng(13);
    DenseNet net(3, {6}, 2, rng);
    const Matrix old_w = net.layer(0).weight;
    net.grow_input(5, rng);
    EXPECT_EQ(net.input_dim(), 5u);
    for (std::size_t r = 0; r < old_w.rows(); ++r)
        for (std::size_t c = 0; c < old_w.cols(); ++c)
            EXPECT_EQ(net.layer(0).weight(r, c), old_w(r, c));
    EXPECT_THROW(net.grow_input(4, rng), ShapeError);
}
