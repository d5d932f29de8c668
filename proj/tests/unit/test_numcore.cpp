#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "check_util.hpp"
#include "hwm/numcore/memory.hpp"

using namespace hwm;
using namespace hwm::num;
using hwm::testing::float_vs_double;
using hwm::testing::probe;
using hwm::testing::random_tensor;

namespace {

template <class G>
using ValueOf = typename std::remove_reference_t<G>::value_type;

template <class Build>
void check_kernel(const char* name, const std::vector<std::pair<std::string, Shape>>& inputs, Build build,
                  std::uint64_t seed = 1) {
    ParamStore<double> store;
    for (const auto& [n, s] : inputs) {
        store.declare(n, s);
    }
    store.allocate();
    hwm::testing::fill_normal(store, seed);
    GradCheckOptions opts;
    opts.tol = 1e-6;
    const auto rep = grad_check([&](Graph<double>& g) { return build(g); }, store, opts);
    CHECK_MESSAGE(rep.passed, name << " (64-bit): " << rep.summary());
    const double err32 = float_vs_double(store, build);
    CHECK_MESSAGE(err32 <= 1e-4, name << " (32-bit): rel err " << err32);
}

}  // namespace

TEST_CASE("tensor shape and element count agree") {
    Tensor<float> t({2, 3}, 1.5f);
    CHECK(t.numel() == 6);
    CHECK(t.dim(-1) == 3);
    CHECK(t.at({1, 2}) == 1.5f);
    CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.f, 2.f, 3.f}), DimensionError);
    CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
    CHECK(t.reshaped({3, 2}).dim(0) == 3);
}

TEST_CASE("matmul hand cases") {
    Graph<double> g;
    auto I = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    auto r = matmul(I, I);
    CHECK(r.value()[0] == 1);
    CHECK(r.value()[1] == 0);
    CHECK(r.value()[3] == 1);

    auto a = g.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
    auto b = g.constant(Tensor<double>({2, 1}, {1, 1}));
    auto c = matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.value()[0] == 3);
    CHECK(c.value()[1] == 7);

    CHECK_THROWS_AS(matmul(a, g.constant(Tensor<double>({3, 1}))), DimensionError);
}

TEST_CASE("matmul batches broadcast against an unbatched operand") {
    Graph<double> g;
    auto a = g.constant(random_tensor<double>({3, 2, 4}, 5));
    auto b = g.constant(random_tensor<double>({4, 5}, 6));
    auto c = matmul(a, b);
    CHECK(c.shape() == Shape{3, 2, 5});
    // Compare batch 2 against an explicit unbatched product.
    auto a2 = g.constant(Tensor<double>({2, 4}, a.value().values().subspan(16, 8)));
    auto c2 = matmul(a2, b);
    for (int i = 0; i < 10; ++i) {
        CHECK(c.value()[20 + i] == doctest::Approx(c2.value()[i]).epsilon(1e-14));
    }
}

TEST_CASE("matmul gradient matches central differences") {
    check_kernel("matmul 5x7.7x3", {{"a", {5, 7}}, {"b", {7, 3}}}, [](auto& g) {
        return probe(matmul(g.param("a"), g.param("b")));
    });
    check_kernel("matmul batched", {{"a", {2, 3, 4}}, {"b", {2, 4, 2}}}, [](auto& g) {
        return probe(matmul(g.param("a"), g.param("b")));
    });
    check_kernel("matmul broadcast", {{"a", {2, 3, 4}}, {"b", {4, 2}}}, [](auto& g) {
        return probe(matmul(g.param("a"), g.param("b")));
    });
}

TEST_CASE("softmax hand cases and stability") {
    Graph<double> g;
    auto s = softmax(g.constant(Tensor<double>({3}, {0, 0, 0})));
    for (int i = 0; i < 3; ++i) {
        CHECK(s.value()[i] == doctest::Approx(1.0 / 3.0));
    }
    auto t = softmax(g.constant(Tensor<double>({3}, {1000, 0, -1000})));
    CHECK(t.value().all_finite());
    CHECK(t.value()[0] == doctest::Approx(1.0));
    CHECK(t.value()[2] == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sum to one for large magnitudes") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Graph<float> g;
        const int axis = static_cast<int>(seed % 3);
        auto s = softmax(g.constant(random_tensor<float>({4, 5, 6}, seed, 1e3)), axis);
        const auto& v = s.value();
        const Shape sh = v.shape();
        const std::int64_t n = sh[static_cast<std::size_t>(axis)];
        std::int64_t inner = 1;
        for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < sh.size(); ++i) {
            inner *= sh[i];
        }
        for (std::int64_t o = 0; o < v.numel() / (n * inner); ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                double total = 0;
                for (std::int64_t i = 0; i < n; ++i) {
                    const double p = v[(o * n + i) * inner + in];
                    CHECK(p >= 0.0);
                    CHECK(p <= 1.0);
                    total += p;
                }
                CHECK(std::abs(total - 1.0) <= 1e-6);
            }
        }
    }
}

TEST_CASE("softmax gradient") {
    check_kernel("softmax last", {{"x", {3, 5}}}, [](auto& g) { return probe(softmax(g.param("x"))); });
    check_kernel("softmax middle", {{"x", {2, 4, 3}}}, [](auto& g) { return probe(softmax(g.param("x"), 1)); });
}

TEST_CASE("layer_norm hand cases") {
    Graph<double> g;
    auto z = layer_norm(g.constant(Tensor<double>({4}, 2.5)));
    for (int i = 0; i < 4; ++i) {
        CHECK(z.value()[i] == 0.0);
    }
    auto y = layer_norm(g.constant(Tensor<double>({2}, {1, 3})));
    CHECK(std::abs(y.value()[0] + 1) < 1e-3);
    CHECK(std::abs(y.value()[1] - 1) < 1e-3);
}

TEST_CASE("layer_norm gradient") {
    check_kernel("layer_norm affine", {{"x", {3, 6}}, {"gain", {6}}, {"bias", {6}}}, [](auto& g) {
        return probe(layer_norm(g.param("x"), g.param("gain"), g.param("bias")));
    });
    check_kernel("layer_norm plain axis 1", {{"x", {2, 5, 3}}}, [](auto& g) {
        using T = ValueOf<decltype(g)>;
        return probe(layer_norm<T>(g.param("x"), {}, {}, 1));
    });
}

TEST_CASE("elementwise and shape kernels pass gradient checks") {
    check_kernel("add broadcast", {{"a", {3, 4}}, {"b", {4}}}, [](auto& g) {
        return probe(add(g.param("a"), g.param("b")));
    });
    check_kernel("mul broadcast", {{"a", {2, 3, 4}}, {"b", {3, 4}}}, [](auto& g) {
        return probe(mul(g.param("a"), g.param("b")));
    });
    check_kernel("sub and scale", {{"a", {5}}, {"b", {5}}}, [](auto& g) {
        using T = ValueOf<decltype(g)>;
        return probe(scale(sub(g.param("a"), g.param("b")), T(0.7)));
    });
    check_kernel("gelu", {{"x", {4, 6}}}, [](auto& g) { return probe(gelu(g.param("x"))); });
    check_kernel("permute", {{"x", {2, 3, 4}}}, [](auto& g) { return probe(permute(g.param("x"), {2, 0, 1})); });
    check_kernel("reshape", {{"x", {2, 6}}}, [](auto& g) { return probe(reshape(g.param("x"), {3, 4})); });
    check_kernel("concat and slice", {{"a", {2, 3, 2}}, {"b", {2, 1, 2}}}, [](auto& g) {
        auto c = concat<ValueOf<decltype(g)>>({g.param("a"), g.param("b")}, 1);
        return probe(slice(c, 1, 1, 3));
    });
    check_kernel("repeat and mean axis", {{"x", {2, 3}}}, [](auto& g) {
        auto r = repeat_axis(g.param("x"), 1, 4);
        auto w = mul(r, g.constant(random_tensor<ValueOf<decltype(g)>>({2, 4, 3}, 3)));
        return probe(mean_axis(w, 1));
    });
    check_kernel("modulate", {{"x", {2, 3, 4}}, {"shift", {2, 4}}, {"scale", {2, 4}}}, [](auto& g) {
        return probe(modulate(g.param("x"), g.param("shift"), g.param("scale")));
    });
    check_kernel("gate", {{"x", {2, 3, 4}}, {"gate", {2, 4}}}, [](auto& g) {
        return probe(gate(g.param("x"), g.param("gate")));
    });
    check_kernel("linear", {{"x", {2, 3, 4}}, {"w", {4, 5}}, {"b", {5}}}, [](auto& g) {
        return probe(linear(g.param("x"), g.param("w"), g.param("b")));
    });
    check_kernel("embedding", {{"table", {6, 3}}}, [](auto& g) {
        return probe(embedding(g.param("table"), {0, 5, 2, 2}, {2, 2}));
    });
    check_kernel("select_batch", {{"x", {3, 2, 4}}, {"null", {4}}}, [](auto& g) {
        return probe(select_batch(g.param("x"), g.param("null"), {1, 0, 1}));
    });
    check_kernel("mse", {{"a", {3, 4}}, {"b", {3, 4}}}, [](auto& g) { return mse(g.param("a"), g.param("b")); });
}

TEST_CASE("attention and rotation gradients") {
    check_kernel("attention", {{"q", {2, 3, 8}}, {"k", {2, 5, 8}}, {"v", {2, 5, 8}}}, [](auto& g) {
        return probe(attention(g.param("q"), g.param("k"), g.param("v"), 2));
    });
    check_kernel("rotate_pairs", {{"x", {2, 3, 8}}}, [](auto& g) {
        using T = ValueOf<decltype(g)>;
        Tensor<T> c({3, 2}), s({3, 2});
        for (int i = 0; i < 6; ++i) {
            c[i] = std::cos(T(0.3) * T(i));
            s[i] = std::sin(T(0.3) * T(i));
        }
        return probe(rotate_pairs(g.param("x"), c, s));
    });
}

TEST_CASE("attention weights are normalized per query") {
    Graph<double> g;
    Tensor<double> probs;
    auto q = g.constant(random_tensor<double>({2, 4, 6}, 1, 5.0));
    auto k = g.constant(random_tensor<double>({2, 7, 6}, 2, 5.0));
    auto v = g.constant(random_tensor<double>({2, 7, 6}, 3));
    attention(q, k, v, 3, &probs);
    CHECK(probs.shape() == Shape{2, 3, 4, 7});
    for (std::int64_t r = 0; r < 2 * 3 * 4; ++r) {
        double total = 0;
        for (int j = 0; j < 7; ++j) {
            total += probs[r * 7 + j];
        }
        CHECK(std::abs(total - 1) <= 1e-12);
    }
}

TEST_CASE("masked cross entropy values and locality") {
    Graph<double> g;
    const int s = 64;
    auto uniform = g.constant(Tensor<double>({3, s}, 0.25));
    auto loss = masked_cross_entropy(uniform, {1, 2, 3}, {1, 0, 1});
    CHECK(loss.value()[0] == doctest::Approx(std::log(64.0)).epsilon(1e-12));
    CHECK(std::abs(std::log(64.0) - 4.1589) < 1e-4);

    Tensor<double> sharp({2, 4}, 0.0);
    sharp.at({0, 1}) = 60;
    sharp.at({1, 3}) = 60;
    auto l2 = masked_cross_entropy(g.constant(sharp), {1, 3}, {1, 1});
    CHECK(l2.value()[0] < 1e-20);

    bool empty = false;
    auto l3 = masked_cross_entropy(g.constant(sharp), {0, 0}, {0, 0}, &empty);
    CHECK(empty);
    CHECK(l3.value()[0] == 0.0);

    check_kernel("masked_cross_entropy", {{"logits", {4, 5}}}, [](auto& g) {
        return masked_cross_entropy(g.param("logits"), {1, 0, 4, 2}, {1, 0, 1, 0});
    });
}

TEST_CASE("masked cross entropy gives exactly zero gradient at unmasked rows") {
    Graph<double> g;
    auto logits = g.variable(random_tensor<double>({6, 8}, 4, 3.0));
    auto loss = masked_cross_entropy(logits, {0, 1, 2, 3, 4, 5}, {0, 1, 0, 1, 1, 0});
    g.backward(loss);
    const auto& gr = g.grad(logits);
    for (int r : {0, 2, 5}) {
        for (int i = 0; i < 8; ++i) {
            CHECK(gr[r * 8 + i] == 0.0);
        }
    }
    double mass = 0;
    for (int i = 0; i < 8; ++i) {
        mass += std::abs(gr[8 + i]);
    }
    CHECK(mass > 0);
}

TEST_CASE("grad_check on a quadratic") {
    ParamStore<double> store;
    store.declare("w", {1});
    store.allocate();
    store.value("w")[0] = 3.0;
    const auto rep = grad_check([](Graph<double>& g) {
        auto w = g.param("w");
        return sum(mul(w, w));
    }, store);
    CHECK(rep.passed);
    CHECK(store.grad("w")[0] == 6.0);
    CHECK(rep.worst_numeric == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("grad_check catches a corrupted backward") {
    ParamStore<double> store;
    store.declare("layer.w", {3, 4});
    store.declare("layer.b", {4});
    store.allocate();
    hwm::testing::fill_normal(store, 11);
    // Linear map whose backward is scaled by 1.01.
    auto f = [](Graph<double>& g) {
        auto x = g.param("layer.w");
        auto y = linear(g.constant(random_tensor<double>({2, 3}, 5)), x, g.param("layer.b"));
        const int iy = y.id;
        auto bad = g.push("bad_copy", y.value(), {y}, [iy](Graph<double>& gg, const Tensor<double>& gout) {
            auto& d = gg.grad_buffer(iy);
            for (std::int64_t i = 0; i < d.numel(); ++i) {
                d[i] += 1.01 * gout[i];
            }
        });
        return probe(bad);
    };
    GradCheckOptions opts;
    opts.tol = 1e-4;
    const auto rep = grad_check(f, store, opts);
    CHECK_FALSE(rep.passed);
    CHECK((rep.worst_param == "layer.w" || rep.worst_param == "layer.b"));
    CHECK_THROWS_AS(require_grad_check(f, store, opts), GradCheckError);
}

TEST_CASE("non-finite kernel output names the kernel") {
    Graph<float> g;
    auto x = g.constant(Tensor<float>({2}, {1.f, 2.f}));
    try {
        scale(x, std::numeric_limits<float>::infinity());
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.kernel() == "scale");
    }
    CHECK_THROWS_AS(g.constant(Tensor<float>({1}, {std::nanf("")})), NumericError);
}

TEST_CASE("parameter aliasing shares one storage") {
    ParamStore<float> store;
    store.declare("blocks.4.v_p.w", {2, 2});
    store.alias("blocks.4.v_f.w", "blocks.4.v_p.w");
    store.alias("blocks.4.a_f.w", "blocks.4.v_f.w");
    store.declare("blocks.4.a_p.w", {2, 2});
    store.allocate();
    CHECK(store.count() == 8);
    CHECK(store.entries().size() == 4);
    CHECK(store.entry("blocks.4.a_f.w").shared_with == std::optional<std::string>("blocks.4.v_p.w"));
    store.value("blocks.4.v_f.w")[3] = 7.f;
    CHECK(store.value("blocks.4.v_p.w")[3] == 7.f);
    CHECK(store.value("blocks.4.a_f.w")[3] == 7.f);
    CHECK(store.value("blocks.4.a_p.w")[3] == 0.f);
    CHECK_THROWS(store.declare("blocks.4.v_p.w", {1}));
}

TEST_CASE("aliased uses accumulate into one gradient") {
    ParamStore<double> store;
    store.declare("p", {3});
    store.alias("q", "p");
    store.allocate();
    store.value("p") = Tensor<double>({3}, {1, 2, 3});
    Graph<double> g(&store);
    auto a = g.param("p");
    auto b = g.param("q");
    CHECK(a.id == b.id);
    g.backward(add(sum(scale(a, 2.0)), sum(b)));
    for (int i = 0; i < 3; ++i) {
        CHECK(store.grad("p")[i] == 3.0);
    }
}

TEST_CASE("allocation accounting tracks tensor bytes") {
    memory::reset_peak();
    const auto before = memory::current_bytes();
    {
        Tensor<float> t({1024});
        CHECK(memory::current_bytes() >= before + 4096);
    }
    CHECK(memory::current_bytes() == before);
    CHECK(memory::peak_bytes() >= before + 4096);
}
