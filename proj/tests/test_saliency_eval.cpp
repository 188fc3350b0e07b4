#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "fd_oracle.hpp"
#include "salfield/primitives.hpp"
#include "salfield/saliency_eval.hpp"

using namespace salfield;

namespace {

std::vector<Vec3> random_cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<Vec3> p(n);
    for (auto& v : p) v = Vec3(u(rng), u(rng), u(rng));
    return p;
}

std::vector<double> random_scores(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(n);
    for (auto& v : s) v = u(rng);
    return s;
}

// Brute-force nearest neighbour excluding self, lowest index on ties.
std::size_t brute_nn(const std::vector<Vec3>& p, std::size_t i) {
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < p.size(); ++j)
        if (j != i && (p[j] - p[i]).norm() < (p[best] - p[i]).norm()) best = j;
    return best;
}

// Exactly mirror-symmetric cloud about x = 0 and z = 0 with symmetric saliency.
void symmetric_cloud(std::vector<Vec3>& pts, std::vector<double>& sal, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.05, 1);
    for (int i = 0; i < 50; ++i) {
        const double x = u(rng), y = u(rng) - 0.5, z = u(rng), s = u(rng);
        for (double sx : {-1.0, 1.0})
            for (double sz : {-1.0, 1.0}) {
                pts.emplace_back(sx * x, y, sz * z);
                sal.push_back(s);
            }
    }
}

}  // namespace

TEST(Normalize, ConstantMapsToZerosAndIsIdempotent) {
    EXPECT_EQ(normalize_saliency(std::vector<double>{0.3, 0.3, 0.3}), (std::vector<double>{0, 0, 0}));
    const auto s = random_scores(40, 1);
    const auto once = normalize_saliency(s);
    EXPECT_EQ(*std::min_element(once.begin(), once.end()), 0.0);
    EXPECT_EQ(*std::max_element(once.begin(), once.end()), 1.0);
    const auto twice = normalize_saliency(once);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(twice[i], once[i], 1e-15);
}

TEST(Ssr, Examples) {
    std::vector<Vec3> p = random_cloud(10, 2);
    EXPECT_EQ(ssr(p, std::vector<double>(10, 0.4)), 0.0);
    EXPECT_EQ(ssr(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0)}, std::vector<double>{0, 1}), 1.0);
    EXPECT_NEAR(ssr(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)}, std::vector<double>{0.2, 0.4, 1.0}),
                1.0 / 3.0, 1e-12);
    EXPECT_THROW(ssr(std::vector<Vec3>{Vec3(0, 0, 0)}, std::vector<double>{0.0}), std::invalid_argument);
    EXPECT_THROW(ssr(p, std::vector<double>(9, 0.0)), std::invalid_argument);
}

TEST(Ssr, MatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = random_cloud(300, seed);
        const auto s = random_scores(300, seed + 100);
        double expect = 0;
        for (std::size_t i = 0; i < p.size(); ++i) expect += std::abs(s[i] - s[brute_nn(p, i)]);
        EXPECT_NEAR(ssr(p, s), expect / 300, 1e-12);
    }
}

TEST(Ssr, InvariantToPermutationAndTranslation) {
    const auto p = random_cloud(200, 7);
    const auto s = normalize_saliency(random_scores(200, 8));
    const double base = ssr(p, s);
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);
    std::vector<std::size_t> perm(200);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), Rng(9));
    std::vector<Vec3> pp, pt;
    std::vector<double> sp;
    for (std::size_t i : perm) {
        pp.push_back(p[i]);
        sp.push_back(s[i]);
    }
    for (const auto& v : p) pt.push_back(v + Vec3(0.5, -2.0, 0.25));
    EXPECT_NEAR(ssr(pp, sp), base, 1e-12);
    EXPECT_NEAR(ssr(pt, s), base, 1e-12);
}

TEST(Symmetry, DistanceExamples) {
    const auto plane = SymmetryPlane::through(Vec3::UnitX(), Vec3::Zero());
    EXPECT_NEAR(symmetry_distance(std::vector<Vec3>{Vec3(1, 0, 0), Vec3(-1, 0, 0)}, std::vector<double>{0.2, 0.8}, plane),
                0.6, 1e-12);
    std::vector<Vec3> pts;
    std::vector<double> sal;
    symmetric_cloud(pts, sal, 3);
    EXPECT_EQ(symmetry_distance(pts, sal, plane), 0.0);
    EXPECT_EQ(symmetry_distance(pts, sal, SymmetryPlane::through(Vec3::UnitZ(), Vec3::Zero())), 0.0);
}

TEST(Symmetry, RefusesAsymmetricInput) {
    const auto p = random_cloud(100, 4);
    EXPECT_THROW(symmetry_distance(p, random_scores(100, 5), SymmetryPlane::through(Vec3::UnitX(), Vec3::Zero())),
                 AsymmetricInput);
}

TEST(Symmetry, DistanceInvariantToOrderAndBounded) {
    std::vector<Vec3> pts;
    std::vector<double> sal;
    symmetric_cloud(pts, sal, 6);
    const auto noisy = normalize_saliency(random_scores(pts.size(), 11));
    const auto plane = SymmetryPlane::through(Vec3::UnitX(), Vec3::Zero());
    const double base = symmetry_distance(pts, noisy, plane);
    EXPECT_GT(base, 0.0);
    EXPECT_LE(base, 1.0);
    std::vector<std::size_t> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), Rng(12));
    std::vector<Vec3> pp, pt;
    std::vector<double> sp;
    for (std::size_t i : perm) {
        pp.push_back(pts[i]);
        sp.push_back(noisy[i]);
    }
    EXPECT_NEAR(symmetry_distance(pp, sp, plane), base, 1e-12);
    // Translating the cloud and the plane together.
    for (const auto& v : pts) pt.push_back(v + Vec3(0.3, 0.1, -0.2));
    EXPECT_NEAR(symmetry_distance(pt, noisy, SymmetryPlane::through(Vec3::UnitX(), Vec3(0.3, 0.1, -0.2))), base, 1e-12);
}

TEST(Symmetry, BoxIsSymmetricAboutAllAxisPlanes) {
    const auto box = make_box(Vec3(0.2, -0.1, 0.3), Vec3(0.4, 0.2, 0.3));
    std::vector<Vec3> pts;
    const int n = 6;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            for (int k = 0; k <= n; ++k)
                if (i == 0 || i == n || j == 0 || j == n || k == 0 || k == n)
                    pts.emplace_back(0.2 + 0.4 * (2.0 * i / n - 1), -0.1 + 0.2 * (2.0 * j / n - 1),
                                     0.3 + 0.3 * (2.0 * k / n - 1));
    const auto r = find_symmetry_plane(pts);
    EXPECT_TRUE(r.is_symmetric);
    for (double d : r.candidate_distance) EXPECT_LT(d, 1e-9);
    (void)box;
}

TEST(Symmetry, RandomCloudsAreAsymmetric) {
    int asym = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) asym += !find_symmetry_plane(random_cloud(512, 1000 + seed)).is_symmetric;
    EXPECT_GE(asym, 19);
}

TEST(Symmetry, ReportCarriesDsymOnlyWhenSymmetric) {
    std::vector<Vec3> pts;
    std::vector<double> sal;
    symmetric_cloud(pts, sal, 13);
    const auto r = symmetry_report(pts, sal);
    ASSERT_TRUE(r.is_symmetric);
    ASSERT_TRUE(r.d_sym.has_value());
    EXPECT_EQ(*r.d_sym, 0.0);
    const auto q = random_cloud(300, 14);
    const auto r2 = symmetry_report(q, random_scores(300, 15));
    EXPECT_FALSE(r2.is_symmetric);
    EXPECT_FALSE(r2.d_sym.has_value());
}

TEST(Pca, CoplanarIsAllZero) {
    std::vector<Vec3> p;
    Rng rng(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 100; ++i) p.emplace_back(u(rng), u(rng), 0.25);
    const auto m = pca_saliency(p);
    for (double v : m.raw) EXPECT_NEAR(v, 0.0, 1e-12);
    for (double v : m.normalized) EXPECT_EQ(v, 0.0);
}

TEST(Pca, CubeCornerBeatsFaceCenter) {
    const auto cube = make_box(Vec3::Zero(), Vec3(0.5, 0.5, 0.5));
    Rng rng(2);
    auto pts = sample_surface(cube, 3000, rng);
    pts.push_back(Vec3(0.5, 0.5, 0.5));  // corner
    pts.push_back(Vec3(0, 0, 0.5));      // face center
    const auto m = pca_saliency(pts, 16);
    // Independent check of the corner value: direct eigen decomposition.
    const KdTree tree(pts);
    auto variation = [&](std::size_t i) {
        const auto nn = tree.knn(pts[i], 16);
        Eigen::MatrixXd x(16, 3);
        for (int r = 0; r < 16; ++r) x.row(r) = pts[nn[r].index].transpose();
        const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
        const Eigen::Matrix3d cov = c.transpose() * c / 16.0;
        const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
        return ev[0] / ev.sum();
    };
    const std::size_t corner = pts.size() - 2, face = pts.size() - 1;
    EXPECT_NEAR(m.raw[corner], variation(corner), 1e-9);
    EXPECT_GT(m.raw[corner], m.raw[face]);
    EXPECT_GT(m.raw[corner], 0.05);
    EXPECT_LT(m.raw[face], 1e-9);
}

TEST(Pca, SphereVariationIsNearlyConstant) {
    const auto sphere = make_icosphere(0.5, 4, Vec3::Zero());
    Rng rng(3);
    // Evenly spread samples (FPS over a dense draw); i.i.d. draws alone give
    // std/mean around 0.36 at k = 16 from neighbourhood sampling noise.
    const auto dense = sample_surface(sphere, 16000, rng);
    std::vector<Vec3> pts;
    for (std::size_t i : farthest_point_sampling(dense, 2000, 3)) pts.push_back(dense[i]);
    const auto m = pca_saliency(pts, 16);
    double mean = 0, sq = 0;
    for (double v : m.raw) mean += v;
    mean /= double(m.raw.size());
    for (double v : m.raw) sq += (v - mean) * (v - mean);
    const double std = std::sqrt(sq / double(m.raw.size()));
    EXPECT_LT(std / mean, 0.3);
}

TEST(Pca, RejectsBadK) {
    const auto p = random_cloud(10, 1);
    EXPECT_THROW(pca_saliency(p, 3), std::invalid_argument);
    EXPECT_THROW(pca_saliency(p, 10), std::invalid_argument);
}

namespace {

PointNetParams<double> small_classifier(std::uint64_t seed) {
    PointNetConfig c;
    c.input_dim = 3;
    c.point_widths = {8, 16};
    c.head_widths = {8};
    c.outputs = 3;
    return PointNetParams<double>::init(c, seed);
}

double ce_value(const PointNetParams<double>& net, const std::vector<Vec3>& pts, int label) {
    ad::Graph<double> g;
    Tensor<double> x = Tensor<double>::matrix(pts.size(), 3);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int c = 0; c < 3; ++c) x[i * 3 + c] = pts[i][c];
    const auto params = bind_params(g, net.tensors, false);
    const auto logits = pointnet_logits(g, net.config, std::span<const ad::Var>(params), g.constant(x), pts.size());
    const auto& l = g.value(logits);
    double m = l[0];
    for (std::size_t j = 1; j < l.cols(); ++j) m = std::max(m, l[j]);
    double z = 0;
    for (std::size_t j = 0; j < l.cols(); ++j) z += std::exp(l[j] - m);
    return -(l[std::size_t(label)] - m - std::log(z));
}

}  // namespace

TEST(GradientSaliency, MatchesFiniteDifferences) {
    const auto net = small_classifier(21);
    auto pts = random_cloud(24, 22);
    const auto g = gradient_norms(net, pts, 1);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        Vec3 fd;
        for (int c = 0; c < 3; ++c) {
            fd[c] = salfield::testing::fd_derivative(
                [&](double v) {
                    auto q = pts;
                    q[i][c] = v;
                    return ce_value(net, q, 1);
                },
                pts[i][c], 1e-3);
        }
        EXPECT_LT(salfield::testing::rel_err(g[i], fd.norm(), 1e-6), 1e-2) << "point " << i;
    }
}

TEST(GradientSaliency, NonPooledPointsScoreZero) {
    // One shared unit reading x; only the largest x wins the pool.
    PointNetConfig c;
    c.input_dim = 3;
    c.point_widths = {1};
    c.head_widths = {};
    c.outputs = 2;
    auto net = PointNetParams<double>::init(c, 1);
    net.tensors[0] = Tensor<double>::matrix(3, 1);
    net.tensors[0][0] = 1.0;
    net.tensors[1][0] = 0.0;
    const std::vector<Vec3> pts{Vec3(0.1, 0, 0), Vec3(0.9, 0.3, 0), Vec3(0.4, 0, 0.2)};
    const auto g = gradient_norms(net, pts, 0);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[2], 0.0);
    EXPECT_GT(g[1], 0.0);
}

TEST(GradientSaliency, DeterministicAndNormalized) {
    const auto net = small_classifier(5).cast<float>();
    const auto pts = random_cloud(64, 6);
    const auto a = gradient_saliency(net, pts), b = gradient_saliency(net, pts);
    EXPECT_EQ(a.raw, b.raw);
    EXPECT_EQ(*std::max_element(a.normalized.begin(), a.normalized.end()), 1.0);
    EXPECT_THROW(gradient_saliency(net, pts, 7), std::out_of_range);
    PointNetParams<float> empty;
    empty.config.input_dim = 3;
    EXPECT_THROW(gradient_saliency(empty, pts), std::invalid_argument);
}

TEST(TopK, Examples) {
    const auto p = random_cloud(6, 1);
    const std::vector<double> s{0.1, 0.9, 0.3, 0.9, 0.5, 0.2};
    EXPECT_EQ(topk_salient(p, s, 6).points.size(), 6u);
    EXPECT_EQ(topk_indices(s, 2), (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(topk_indices(s, 3), (std::vector<std::size_t>{1, 3, 4}));
    // Tie at 0.9 resolved toward the lower index.
    EXPECT_EQ(topk_indices(s, 1), (std::vector<std::size_t>{1}));
    EXPECT_THROW(topk_indices(s, 0), std::out_of_range);
    EXPECT_THROW(topk_indices(s, 7), std::out_of_range);
    const auto c = topk_salient(p, s, 2);
    EXPECT_EQ(c.points[0], p[1]);
    EXPECT_EQ(c.points[1], p[3]);
}

TEST(TopK, PermutationGivesSameSetProperty) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = random_cloud(100, seed);
        const auto s = random_scores(100, seed + 50);
        std::vector<std::size_t> perm(100);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), Rng(seed + 77));
        std::vector<Vec3> pp;
        std::vector<double> sp;
        for (std::size_t i : perm) {
            pp.push_back(p[i]);
            sp.push_back(s[i]);
        }
        EXPECT_EQ(hausdorff(topk_salient(p, s, 10).points, topk_salient(pp, sp, 10).points), 0.0);
    }
}

TEST(WeightedGrad, IdentityZeroAndHalf) {
    Tensor<float> g = Tensor<float>::matrix(3, 2);
    for (std::size_t i = 0; i < 6; ++i) g[i] = float(i) - 2.5f;
    EXPECT_TRUE(saliency_weighted_grad(g, std::vector<float>(3, 1.0f)) == g);
    const auto z = saliency_weighted_grad(g, std::vector<float>(3, 0.0f));
    for (float v : z.values()) EXPECT_EQ(v, 0.0f);
    const auto h = saliency_weighted_grad(g, std::vector<float>(3, 0.5f));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(h[i], g[i] * 0.5f);
    EXPECT_THROW(saliency_weighted_grad(g, std::vector<float>(2, 1.0f)), std::invalid_argument);
}

TEST(WeightedGrad, ZeroWeightsStopFirstLayerUpdate) {
    const auto net = small_classifier(31);
    const auto pts = random_cloud(16, 32);
    auto grads = [&](double w) {
        ad::Graph<double> g;
        Tensor<double> x = Tensor<double>::matrix(16, 3);
        for (std::size_t i = 0; i < 16; ++i)
            for (int c = 0; c < 3; ++c) x[i * 3 + c] = pts[i][c];
        const auto params = bind_params(g, net.tensors, true);
        FeatureGradWeighting<double> fw{0, std::vector<double>(16, w)};
        const auto logits =
            pointnet_logits(g, net.config, std::span<const ad::Var>(params), g.constant(x), 16, &fw);
        g.backward(ad::softmax_cross_entropy(g, logits, std::vector<int>{2}));
        return std::make_pair(g.grad(params[0]), g.grad(params[2]));
    };
    const auto [w0, w2] = grads(0.0);
    for (double v : w0.values()) EXPECT_EQ(v, 0.0);
    const auto [h0, h2] = grads(0.5);
    const auto [f0, f2] = grads(1.0);
    for (std::size_t i = 0; i < f0.size(); ++i) EXPECT_NEAR(h0[i], 0.5 * f0[i], 1e-15);
    EXPECT_TRUE(h2 == f2);  // layers above m are untouched
}

TEST(MetricsCsv, Schema) {
    const std::vector<MetricsRow> rows{{"table_0000", "issn", 0.125, true, 0.0625}, {"t1", "pca", 0.5, false, {}}};
    EXPECT_EQ(metrics_csv(rows), "shape_id,method,ssr,is_symmetric,d_sym\ntable_0000,issn,0.125,1,0.0625\nt1,pca,0.5,0,\n");
    const std::vector<Vec3> p{Vec3(1, 2, 3)};
    const auto m = SaliencyMap::from_raw({0.25});
    EXPECT_EQ(saliency_map_csv("s", p, m), "shape_id,point_index,x,y,z,raw,normalized\ns,0,1,2,3,0.25,0\n");
}
