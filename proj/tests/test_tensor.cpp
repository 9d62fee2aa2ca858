#include <doctest.h>

#include <cmath>
#include <cstring>

#include "adapos/kernels.hpp"
#include "adapos/rng.hpp"
#include "adapos/tensor.hpp"

using namespace adapos;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t(i) = rng.uniform(lo, hi);
    return t;
}

// Independent triple-loop matmul oracle (j-inner accumulation differs from the
// kernel's loop order on purpose).
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> y(static_cast<size_t>(m * n), 0.0);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t t = 0; t < k; ++t) s += a(i, t) * b(t, j);
            y[static_cast<size_t>(i * n + j)] = s;
        }
    return y;
}

}  // namespace

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), shape_error);
    CHECK_THROWS_AS(Tensor({0, 3}), shape_error);
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t(1, 0) == 3.0);
    CHECK(t.node == -1);
}

TEST_CASE("matmul identity and hand example") {
    Tape tape(false);
    Tensor i2({2, 2}, {1, 0, 0, 1});
    Tensor r = matmul(tape, i2, i2);
    CHECK(r(0, 0) == 1.0);
    CHECK(r(0, 1) == 0.0);
    CHECK(r(1, 1) == 1.0);

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {5, 6});
    Tensor c = matmul(tape, a, b);
    CHECK(c(0, 0) == doctest::Approx(17.0));
    CHECK(c(1, 0) == doctest::Approx(39.0));

    CHECK_THROWS_AS(matmul(tape, a, Tensor({3, 2})), shape_error);
}

TEST_CASE("matmul matches naive oracle on random 8x8") {
    Rng rng(42);
    Tape tape(false);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = random_tensor({8, 8}, rng);
        Tensor b = random_tensor({8, 8}, rng);
        Tensor c = matmul(tape, a, b);
        auto ref = naive_matmul(a, b);
        for (int64_t i = 0; i < 64; ++i) CHECK(c(i) == doctest::Approx(ref[static_cast<size_t>(i)]).epsilon(1e-12));
    }
}

TEST_CASE("matmul gradient of sum is ones times B transpose") {
    ParamSet ps;
    Rng rng(7);
    Tensor& a = ps.add("a", random_tensor({3, 4}, rng));
    ps.finalize();
    Tensor b = random_tensor({4, 2}, rng);

    Tape tape(ps);
    Tensor loss = sum_all(tape, matmul(tape, a, b));
    auto grads = tape.backward(loss);
    const Tensor& ga = grads.at("a");
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            double expect = 0.0;
            for (int64_t c = 0; c < 2; ++c) expect += b(j, c);
            CHECK(ga(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("conv1d_same identity kernel and sliding-window oracle") {
    Tape tape(false);

    SUBCASE("delta kernel reproduces input") {
        Rng rng(3);
        Tensor x = random_tensor({2, 9}, rng);
        Tensor w({2, 2, 3});
        w(0, 0, 1) = 1.0;  // center tap only, per-channel identity
        w(1, 1, 1) = 1.0;
        Tensor bias({2});
        Tensor y = conv1d_same(tape, x, w, bias);
        for (int64_t i = 0; i < x.size(); ++i) CHECK(y(i) == doctest::Approx(x(i)));
    }

    SUBCASE("moving average matches hand-computed values") {
        Tensor x({1, 3}, {1, 2, 3});
        Tensor w({1, 1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
        Tensor bias({1});
        Tensor y = conv1d_same(tape, x, w, bias);
        CHECK(y(0) == doctest::Approx(1.0));
        CHECK(y(1) == doctest::Approx(2.0));
        CHECK(y(2) == doctest::Approx(5.0 / 3.0));
    }

    SUBCASE("even kernel width is rejected") {
        Tensor x({1, 4});
        Tensor w({1, 1, 2});
        Tensor bias({1});
        CHECK_THROWS_AS(conv1d_same(tape, x, w, bias), config_error);
    }
}

TEST_CASE("conv1d_same gradients match finite differences") {
    ParamSet ps;
    Rng rng(11);
    ps.add("x", random_tensor({3, 8}, rng));
    ps.add("w", random_tensor({4, 3, 3}, rng));
    ps.add("b", random_tensor({4}, rng));
    ps.finalize();

    auto f = [](Tape& tape, ParamSet& p) {
        Tensor y = conv1d_same(tape, p.at("x"), p.at("w"), p.at("b"));
        Tensor sq = mul(tape, y, y);
        return sum_all(tape, sq);
    };
    auto report = finite_difference_check(f, ps, 1e-5, 1e-4);
    CHECK(report.all_pass);
}

TEST_CASE("softmax_lastdim") {
    Tape tape(false);

    SUBCASE("uniform input") {
        Tensor x({3}, {0, 0, 0});
        Tensor y = softmax_lastdim(tape, x);
        for (int i = 0; i < 3; ++i) CHECK(y(i) == doctest::Approx(1.0 / 3));
    }

    SUBCASE("log-integers give exact ratios") {
        Tensor x({3}, {std::log(1.0), std::log(2.0), std::log(3.0)});
        Tensor y = softmax_lastdim(tape, x);
        CHECK(y(0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
        CHECK(y(1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
        CHECK(y(2) == doctest::Approx(3.0 / 6).epsilon(1e-12));
    }

    SUBCASE("shift invariance and normalization") {
        Rng rng(5);
        Tensor x = random_tensor({4, 6}, rng, -3.0, 3.0);
        Tensor xs(x.shape());
        for (int64_t i = 0; i < x.size(); ++i) xs(i) = x(i) + 17.25;
        Tensor y0 = softmax_lastdim(tape, x);
        Tensor y1 = softmax_lastdim(tape, xs);
        for (int64_t i = 0; i < x.size(); ++i) CHECK(y0(i) == doctest::Approx(y1(i)).epsilon(1e-12));
        for (int64_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int64_t j = 0; j < 6; ++j) {
                CHECK(y0(r, j) >= 0.0);
                CHECK(y0(r, j) <= 1.0);
                s += y0(r, j);
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }

    SUBCASE("NaN input is a numeric error") {
        Tensor x({2}, {0.0, std::nan("")});
        CHECK_THROWS_AS(softmax_lastdim(tape, x), numeric_error);
    }

    SUBCASE("gradient matches finite differences") {
        ParamSet ps;
        Rng rng(6);
        ps.add("x", random_tensor({2, 5}, rng));
        ps.finalize();
        Tensor coeff = random_tensor({2, 5}, rng);
        auto f = [coeff](Tape& tape, ParamSet& p) {
            return sum_all(tape, mul(tape, softmax_lastdim(tape, p.at("x")), coeff));
        };
        auto report = finite_difference_check(f, ps, 1e-5, 1e-4);
        CHECK(report.all_pass);
    }
}

TEST_CASE("layer_norm") {
    SUBCASE("constant slice maps to offset") {
        Tape tape(false);
        Tensor x({2, 4}, {3, 3, 3, 3, -1, -1, -1, -1});
        Tensor gain({4}, {1, 1, 1, 1});
        Tensor off({4});
        Tensor y = layer_norm(tape, x, gain, off);
        for (int64_t i = 0; i < y.size(); ++i) CHECK(y(i) == doctest::Approx(0.0));
    }

    SUBCASE("normalizes mean and variance") {
        Tape tape(false);
        Rng rng(8);
        Tensor x = random_tensor({3, 64}, rng, -10.0, 10.0);
        Tensor gain({64});
        for (int i = 0; i < 64; ++i) gain(i) = 1.0;
        Tensor off({64});
        Tensor y = layer_norm(tape, x, gain, off);
        for (int64_t r = 0; r < 3; ++r) {
            double mean = 0.0;
            for (int64_t j = 0; j < 64; ++j) mean += y(r, j);
            mean /= 64.0;
            CHECK(std::abs(mean) <= 1e-9);
            double var = 0.0;
            for (int64_t j = 0; j < 64; ++j) var += (y(r, j) - mean) * (y(r, j) - mean);
            var /= 64.0;
            CHECK(std::abs(var - 1.0) <= 1e-6);
        }
    }

    SUBCASE("feature dim below 2 is rejected") {
        Tape tape(false);
        Tensor x({3, 1});
        Tensor gain({1});
        Tensor off({1});
        CHECK_THROWS_AS(layer_norm(tape, x, gain, off), config_error);
    }

    SUBCASE("gradient matches finite differences") {
        ParamSet ps;
        Rng rng(9);
        ps.add("x", random_tensor({3, 6}, rng));
        ps.add("gain", random_tensor({6}, rng, 0.5, 1.5));
        ps.add("off", random_tensor({6}, rng));
        ps.finalize();
        Tensor coeff = random_tensor({3, 6}, rng);
        auto f = [coeff](Tape& tape, ParamSet& p) {
            Tensor y = layer_norm(tape, p.at("x"), p.at("gain"), p.at("off"));
            return sum_all(tape, mul(tape, y, coeff));
        };
        auto report = finite_difference_check(f, ps, 1e-5, 1e-4);
        CHECK(report.all_pass);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("d(x^2)/dx at 3 is 6") {
        ParamSet ps;
        ps.add("x", Tensor::scalar(3.0));
        ps.finalize();
        Tape tape(ps);
        Tensor x = ps.at("x");
        Tensor loss = mul(tape, x, x);
        auto grads = tape.backward(loss);
        CHECK(grads.at("x")(0) == doctest::Approx(6.0));
    }

    SUBCASE("unused parameter gets a zero gradient") {
        ParamSet ps;
        ps.add("x", Tensor::scalar(3.0));
        ps.add("unused", Tensor({2, 2}, {1, 2, 3, 4}));
        ps.finalize();
        Tape tape(ps);
        Tensor x = ps.at("x");
        auto grads = tape.backward(mul(tape, x, x));
        const Tensor& gu = grads.at("unused");
        CHECK(gu.shape() == std::vector<int64_t>{2, 2});
        for (int64_t i = 0; i < 4; ++i) CHECK(gu(i) == 0.0);
    }

    SUBCASE("untracked loss is a usage error") {
        ParamSet ps;
        ps.add("x", Tensor::scalar(3.0));
        ps.finalize();
        Tape tape(ps);
        Tensor plain = Tensor::scalar(1.0);
        CHECK_THROWS_AS(tape.backward(plain), usage_error);
    }

    SUBCASE("three-layer composite passes the finite-difference oracle") {
        ParamSet ps;
        Rng rng(13);
        ps.add("w1", random_tensor({4, 6}, rng));
        ps.add("b1", random_tensor({6}, rng));
        ps.add("w2", random_tensor({6, 5}, rng));
        ps.add("b2", random_tensor({5}, rng));
        ps.add("w3", random_tensor({5, 3}, rng));
        ps.add("gain", random_tensor({6}, rng, 0.5, 1.5));
        ps.add("off", random_tensor({6}, rng));
        ps.finalize();
        Tensor x = random_tensor({2, 4}, rng);
        auto f = [x](Tape& tape, ParamSet& p) {
            Tensor h1 = layer_norm(tape, add_bias(tape, matmul(tape, x, p.at("w1")), p.at("b1")),
                                   p.at("gain"), p.at("off"));
            Tensor h2 = softmax_lastdim(tape, add_bias(tape, matmul(tape, h1, p.at("w2")), p.at("b2")));
            return sum_all(tape, matmul(tape, h2, p.at("w3")));
        };
        auto report = finite_difference_check(f, ps, 1e-5, 1e-4);
        CHECK(report.all_pass);
    }

    SUBCASE("two backward passes are bitwise identical") {
        ParamSet ps;
        Rng rng(14);
        ps.add("w", random_tensor({5, 5}, rng));
        ps.finalize();
        Tensor x = random_tensor({3, 5}, rng);
        Tape tape(ps);
        Tensor y = relu(tape, matmul(tape, x, ps.at("w")));
        Tensor loss = sum_all(tape, mul(tape, y, y));
        auto g1 = tape.backward_flat(loss);
        auto g2 = tape.backward_flat(loss);
        REQUIRE(g1.size() == g2.size());
        for (size_t i = 0; i < g1.size(); ++i) {
            REQUIRE(g1[i].size() == g2[i].size());
            CHECK(std::memcmp(g1[i].data(), g2[i].data(), g1[i].size() * sizeof(double)) == 0);
        }
    }
}

TEST_CASE("finite_difference_check oracle behavior") {
    SUBCASE("quadratic objective is exact to roundoff") {
        ParamSet ps;
        Rng rng(21);
        ps.add("p", random_tensor({8}, rng));
        ps.finalize();
        auto f = [](Tape& tape, ParamSet& p) {
            Tensor x = p.at("p");
            return sum_all(tape, mul(tape, x, x));
        };
        auto report = finite_difference_check(f, ps, 1e-5, 1e-4);
        CHECK(report.all_pass);
        CHECK(report.worst <= 1e-7);
    }

    SUBCASE("corrupted gradient rule is reported with the parameter name") {
        ParamSet ps;
        ps.add("bad", Tensor({3}, {0.4, -0.7, 0.9}));
        ps.finalize();
        // Forward doubles the value, but the recorded rule claims a factor of 3.
        auto f = [](Tape& tape, ParamSet& p) {
            Tensor x = p.at("bad");
            Tensor out(x.shape());
            for (int64_t i = 0; i < x.size(); ++i) out(i) = 2.0 * x(i);
            if (tape.recording() && x.node >= 0) {
                const int xn = x.node;
                out.node = tape.emit(out.size(), {xn},
                                     [xn](const std::vector<double>& g, Tape::Flow& fl) {
                                         auto& gx = fl.at(xn);
                                         for (size_t i = 0; i < g.size(); ++i) gx[i] += 3.0 * g[i];
                                     });
            }
            return sum_all(tape, out);
        };
        auto report = finite_difference_check(f, ps, 1e-5, 1e-4);
        CHECK_FALSE(report.all_pass);
        CHECK(report.worst_path == "bad");
    }

    SUBCASE("non-deterministic objective raises an oracle error") {
        ParamSet ps;
        ps.add("p", Tensor::scalar(1.0));
        ps.finalize();
        int calls = 0;
        auto f = [&calls](Tape&, ParamSet&) { return Tensor::scalar(static_cast<double>(calls++)); };
        CHECK_THROWS_AS(finite_difference_check(f, ps, 1e-5, 1e-4), oracle_error);
    }
}

TEST_CASE("parallel kernels agree with serial reference") {
    Rng rng(31);

    SUBCASE("matmul family") {
        const int m = 33, k = 47, n = 29;
        std::vector<double> a(static_cast<size_t>(m * k)), b(static_cast<size_t>(k * n));
        for (auto& v : a) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        std::vector<double> y0(static_cast<size_t>(m * n)), y1(static_cast<size_t>(m * n));
        kernels::serial::matmul(a.data(), b.data(), y0.data(), m, k, n);
        kernels::matmul(a.data(), b.data(), y1.data(), m, k, n);
        for (size_t i = 0; i < y0.size(); ++i) CHECK(y1[i] == doctest::Approx(y0[i]).epsilon(1e-13));

        std::vector<double> g(static_cast<size_t>(m * n));
        for (auto& v : g) v = rng.uniform(-1, 1);
        std::vector<double> ga0(static_cast<size_t>(m * k), 0.5), ga1(static_cast<size_t>(m * k), 0.5);
        kernels::serial::matmul_nt_acc(g.data(), b.data(), ga0.data(), m, k, n);
        kernels::matmul_nt_acc(g.data(), b.data(), ga1.data(), m, k, n);
        for (size_t i = 0; i < ga0.size(); ++i) CHECK(ga1[i] == doctest::Approx(ga0[i]).epsilon(1e-13));

        std::vector<double> gb0(static_cast<size_t>(k * n), -0.25), gb1(static_cast<size_t>(k * n), -0.25);
        kernels::serial::matmul_tn_acc(a.data(), g.data(), gb0.data(), k, n, m);
        kernels::matmul_tn_acc(a.data(), g.data(), gb1.data(), k, n, m);
        for (size_t i = 0; i < gb0.size(); ++i) CHECK(gb1[i] == doctest::Approx(gb0[i]).epsilon(1e-13));
    }

    SUBCASE("conv1d family") {
        const int ci = 5, co = 7, len = 41, kw = 3;
        std::vector<double> x(static_cast<size_t>(ci * len)), w(static_cast<size_t>(co * ci * kw)),
            bias(static_cast<size_t>(co)), gy(static_cast<size_t>(co * len));
        for (auto& v : x) v = rng.uniform(-1, 1);
        for (auto& v : w) v = rng.uniform(-1, 1);
        for (auto& v : bias) v = rng.uniform(-1, 1);
        for (auto& v : gy) v = rng.uniform(-1, 1);

        std::vector<double> y0(static_cast<size_t>(co * len)), y1(static_cast<size_t>(co * len));
        kernels::serial::conv1d_fwd(x.data(), w.data(), bias.data(), y0.data(), ci, co, len, kw);
        kernels::conv1d_fwd(x.data(), w.data(), bias.data(), y1.data(), ci, co, len, kw);
        for (size_t i = 0; i < y0.size(); ++i) CHECK(y1[i] == doctest::Approx(y0[i]).epsilon(1e-13));

        std::vector<double> gx0(static_cast<size_t>(ci * len), 0.0), gx1(gx0);
        kernels::serial::conv1d_grad_x_acc(gy.data(), w.data(), gx0.data(), ci, co, len, kw);
        kernels::conv1d_grad_x_acc(gy.data(), w.data(), gx1.data(), ci, co, len, kw);
        for (size_t i = 0; i < gx0.size(); ++i) CHECK(gx1[i] == doctest::Approx(gx0[i]).epsilon(1e-13));

        std::vector<double> gw0(static_cast<size_t>(co * ci * kw), 0.0), gw1(gw0);
        kernels::serial::conv1d_grad_w_acc(gy.data(), x.data(), gw0.data(), ci, co, len, kw);
        kernels::conv1d_grad_w_acc(gy.data(), x.data(), gw1.data(), ci, co, len, kw);
        for (size_t i = 0; i < gw0.size(); ++i) CHECK(gw1[i] == doctest::Approx(gw0[i]).epsilon(1e-13));
    }
}

TEST_CASE("shape utility ops") {
    Tape tape(false);
    Rng rng(17);

    SUBCASE("transpose, slice, concat round trip") {
        Tensor x = random_tensor({4, 6}, rng);
        Tensor xt = transpose(tape, x);
        CHECK(xt.dim(0) == 6);
        CHECK(xt(2, 3) == x(3, 2));
        Tensor left = slice_cols(tape, x, 0, 2);
        Tensor right = slice_cols(tape, x, 2, 6);
        std::vector<Tensor> parts{left, right};
        Tensor back = concat_cols(tape, parts);
        for (int64_t i = 0; i < x.size(); ++i) CHECK(back(i) == x(i));
    }

    SUBCASE("embedding lookup semantics") {
        Tensor table({4, 3}, {0, 1, 2, 10, 11, 12, 20, 21, 22, 30, 31, 32});
        std::vector<int> ids{2, 0};
        Tensor out = embedding_rows(tape, table, ids);
        CHECK(out(0, 0) == 20.0);
        CHECK(out(1, 0) == 0.0);
        std::vector<int> dup{0, 0};
        CHECK_THROWS_AS(embedding_rows(tape, table, dup), validation_error);
        std::vector<int> oob{5};
        CHECK_THROWS_AS(embedding_rows(tape, table, oob), validation_error);
    }

    SUBCASE("embedding gradient hits only looked-up rows") {
        ParamSet ps;
        ps.add("table", Tensor({4, 3}, {0, 1, 2, 10, 11, 12, 20, 21, 22, 30, 31, 32}));
        ps.finalize();
        Tape rec(ps);
        std::vector<int> ids{2, 0};
        Tensor out = embedding_rows(rec, ps.at("table"), ids);
        auto grads = rec.backward(sum_all(rec, out));
        const Tensor& gt = grads.at("table");
        for (int64_t j = 0; j < 3; ++j) {
            CHECK(gt(0, j) == 1.0);
            CHECK(gt(1, j) == 0.0);
            CHECK(gt(2, j) == 1.0);
            CHECK(gt(3, j) == 0.0);
        }
    }
}
