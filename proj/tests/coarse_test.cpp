#include "fracms/coarse.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace fracms;
using linalg::DenseMatrix;
using linalg::Index;

namespace {

SparseMatrix sparse(const DenseMatrix& d)
{
    std::vector<Triplet> t;
    for (Index i = 0; i < d.rows(); ++i)
        for (Index j = 0; j < d.cols(); ++j)
            if (d(i, j) != 0.0) t.emplace_back(i, j, d(i, j));
    return linalg::csr_from_triplets(t, d.rows(), d.cols());
}

DenseMatrix random_matrix(Index r, Index c, unsigned seed)
{
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DenseMatrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

DenseMatrix spd(Index n, unsigned seed)
{
    const DenseMatrix g = random_matrix(n, n, seed);
    return g * g.transpose() + DenseMatrix::Identity(n, n);
}

FineMesh small_fractured()
{
    std::istringstream in("0,30,50,50\n");
    return snap_fractures(build_structured_trimesh(80.0, 80.0, 12, 12), parse_fractures(in, 80.0, 80.0));
}

} // namespace

TEST(Projection, IdentityReproducesFineMatrices)
{
    const auto mesh = small_fractured();
    const auto fine = assemble_fine_system(mesh, MaterialParams{});
    const auto sys = project_system(linalg::identity(fine.size()), fine.mass, fine.stiffness, fine.forcing);
    EXPECT_LT(DenseMatrix(sys.mass - fine.mass).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT(DenseMatrix(sys.stiffness - fine.stiffness).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(sys.forcing, fine.forcing);
    EXPECT_EQ(linalg::max_abs_asymmetry(sys.mass), 0.0);
    EXPECT_EQ(linalg::max_abs_asymmetry(sys.stiffness), 0.0);
}

TEST(Projection, TripleProductMatchesLoops)
{
    const DenseMatrix r = random_matrix(3, 3, 1);
    const DenseMatrix m = spd(3, 2);
    const auto sys = project_system(sparse(r), sparse(m), sparse(m), Vector::Ones(3));
    for (Index i = 0; i < 3; ++i) {
        for (Index j = 0; j < 3; ++j) {
            double s = 0.0;
            for (Index k = 0; k < 3; ++k)
                for (Index l = 0; l < 3; ++l) s += r(i, k) * m(k, l) * r(j, l);
            EXPECT_NEAR(sys.mass.coeff(i, j), s, 1e-12);
        }
    }
    EXPECT_THROW((void)project_system(sparse(r), sparse(spd(4, 3)), sparse(spd(4, 3)), Vector::Ones(4)),
                 linalg::StructuralError);
}

TEST(InitialProjection, IdentityAndRangeReproduction)
{
    const DenseMatrix m = spd(6, 4);
    const Vector p = Vector::LinSpaced(6, 1.0, 3.0);
    EXPECT_LT((project_initial(linalg::identity(6), sparse(m), p) - p).norm(), 1e-10);

    const DenseMatrix r = random_matrix(3, 6, 5);
    const Vector c = Vector::LinSpaced(3, -1.0, 2.0);
    const Vector in_range = r.transpose() * c;
    const Vector pc = project_initial(sparse(r), sparse(m), in_range);
    EXPECT_LT((reconstruct_fine(sparse(r), pc) - in_range).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Reconstruction, ZeroIdentityAndLinearity)
{
    const SparseMatrix r = sparse(random_matrix(4, 7, 6));
    EXPECT_EQ(reconstruct_fine(r, Vector::Zero(4)), Vector::Zero(7));
    const Vector a = Vector::LinSpaced(4, 0.0, 1.0);
    const Vector b = Vector::LinSpaced(4, 3.0, -2.0);
    EXPECT_LT((reconstruct_fine(r, a + b) - reconstruct_fine(r, a) - reconstruct_fine(r, b)).cwiseAbs().maxCoeff(),
              1e-13);
    EXPECT_EQ(reconstruct_fine(linalg::identity(4), a), a);
    EXPECT_THROW((void)reconstruct_fine(r, Vector::Zero(3)), linalg::StructuralError);
}

TEST(CoarseImplicit, NoDynamicsKeepsState)
{
    auto sys = project_system(linalg::identity(3), sparse(spd(3, 7)), SparseMatrix(3, 3), Vector::Zero(3), 2.0);
    const Vector p = Vector::LinSpaced(3, 1.0, 2.0);
    EXPECT_LT((step_coarse_implicit(sys, p) - p).norm(), 1e-14);
}

TEST(CoarseImplicit, IdentityProjectionMatchesFineInBothDirichletModes)
{
    const auto mesh = small_fractured();
    MaterialParams mat;
    mat.n_steps = 10;
    const auto fine = run_fine_reference(mesh, mat);
    const auto sys_fine = assemble_fine_system(mesh, mat);
    for (auto mode : {CoarseDirichlet::penalty, CoarseDirichlet::eliminate}) {
        const auto sys = project_system(linalg::identity(sys_fine.size()), sys_fine, mat, mode);
        const CoarseImplicitStepper stepper(sys);
        const Vector p0 = Vector::Constant(sys_fine.size(), mat.p0);
        Vector pc = project_initial(sys, sys_fine.mass, p0);
        EXPECT_LT((reconstruct_fine(sys, pc, true) - p0).cwiseAbs().maxCoeff(), 1e-10);
        for (int n = 1; n <= mat.n_steps; ++n) {
            pc = stepper.step(pc, n == 1);
            const Vector ph = reconstruct_fine(sys, pc);
            const Vector& ref = fine.snapshots[static_cast<std::size_t>(n)];
            EXPECT_LT((ph - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff(), 1e-8)
                << "step " << n << (mode == CoarseDirichlet::penalty ? " penalty" : " eliminate");
        }
    }
}

TEST(CoarseImplicit, SteadyBoundaryStateIsPreserved)
{
    const auto mesh = small_fractured();
    MaterialParams mat;
    const auto fine = assemble_fine_system(mesh, mat);
    const auto sys = project_system(linalg::identity(fine.size()), fine, mat);
    const CoarseImplicitStepper stepper(sys);
    Vector pc = Vector::Constant(sys.size(), mat.g);
    for (int d : fine.dirichlet_nodes) pc[d] = 0.0;
    for (int n = 0; n < 3; ++n) pc = stepper.step(pc);
    EXPECT_LT((reconstruct_fine(sys, pc).array() - mat.g).abs().maxCoeff(), 1e-8);
}

TEST(PartiallyExplicit, AllImplicitEqualsImplicit)
{
    const auto mesh = small_fractured();
    MaterialParams mat;
    const auto fine = assemble_fine_system(mesh, mat);
    const SparseMatrix r = sparse(random_matrix(20, fine.size(), 8).cwiseAbs());
    const auto sys = project_system(r, fine, mat);
    const Vector p = Vector::LinSpaced(20, 1.0, 5.0);
    for (bool first : {true, false}) {
        const Vector a = step_coarse_partial(sys, p, first);
        const Vector b = step_coarse_implicit(sys, p, first);
        EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12 * b.cwiseAbs().maxCoeff());
    }
}

TEST(PartiallyExplicit, NoImplicitRowsIsForwardEuler)
{
    const DenseMatrix m = spd(5, 9);
    const DenseMatrix a = spd(5, 10);
    const Vector f = Vector::LinSpaced(5, 0.0, 1.0);
    auto sys = project_system(linalg::identity(5), sparse(m), sparse(a), f, 0.1);
    sys.implicit_rows.assign(5, false);
    const Vector p = Vector::LinSpaced(5, 2.0, -1.0);
    const Vector expect = m.llt().solve((m - 0.1 * a) * p + 0.1 * f);
    EXPECT_LT((step_coarse_partial(sys, p) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PartiallyExplicit, MixedSplitMatchesDenseBlockSolve)
{
    const DenseMatrix m = spd(3, 11);
    const DenseMatrix a = spd(3, 12);
    const Vector f(Vector::LinSpaced(3, 1.0, 2.0));
    const double tau = 0.7;
    auto sys = project_system(linalg::identity(3), sparse(m), sparse(a), f, tau);
    sys.implicit_rows = {true, false, true};
    const Vector p = Vector::LinSpaced(3, -1.0, 1.0);

    // hand-built: columns 0 and 2 implicit, column 1 explicit
    DenseMatrix lhs = m;
    DenseMatrix rhs_op = m;
    for (Index i = 0; i < 3; ++i) {
        lhs(i, 0) += tau * a(i, 0);
        lhs(i, 2) += tau * a(i, 2);
        rhs_op(i, 1) -= tau * a(i, 1);
    }
    const Vector expect = lhs.fullPivLu().solve(rhs_op * p + tau * f);
    EXPECT_LT((step_coarse_partial(sys, p) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PartiallyExplicit, FactoredOnceAcrossSteps)
{
    auto sys = project_system(linalg::identity(4), sparse(spd(4, 13)), sparse(spd(4, 14)), Vector::Zero(4), 0.5);
    sys.implicit_rows = {true, false, false, true};
    const PartiallyExplicitStepper stepper(sys);
    Vector p = Vector::Ones(4);
    for (int n = 0; n < 25; ++n) p = stepper.step(p);
    EXPECT_EQ(stepper.factorizations(), 1);
}

TEST(PartiallyExplicit, SingularSystemIsAConfigurationError)
{
    auto sys = project_system(linalg::identity(2), SparseMatrix(2, 2), SparseMatrix(2, 2), Vector::Zero(2), 1.0);
    sys.implicit_rows = {false, false};
    EXPECT_THROW((void)PartiallyExplicitStepper(sys), ConfigurationError);
    sys.implicit_rows = {true};
    EXPECT_THROW((void)PartiallyExplicitStepper(sys), linalg::StructuralError);
}

TEST(StableTau, DiagonalAndScaling)
{
    auto sys = project_system(linalg::identity(4), linalg::identity(4), linalg::identity(4), Vector::Zero(4));
    EXPECT_NEAR(estimate_stable_tau(sys, StableSubset::all).tau, 2.0, 1e-6);

    const DenseMatrix m = spd(6, 15);
    const DenseMatrix a = spd(6, 16);
    auto base = project_system(linalg::identity(6), sparse(m), sparse(a), Vector::Zero(6));
    auto scaled = project_system(linalg::identity(6), sparse(m), sparse(10.0 * a), Vector::Zero(6));
    const double t1 = estimate_stable_tau(base, StableSubset::all).tau;
    const double t10 = estimate_stable_tau(scaled, StableSubset::all).tau;
    EXPECT_NEAR(t10, t1 / 10.0, 1e-4 * t1 / 10.0);
}

TEST(StableTau, ExplicitBlockUsesSubmatrices)
{
    Vector d(3);
    d << 1.0, 100.0, 4.0;
    auto sys = project_system(linalg::identity(3), linalg::identity(3), linalg::diagonal(d), Vector::Zero(3));
    sys.implicit_rows = {false, true, false};
    const auto all = estimate_stable_tau(sys, StableSubset::all);
    const auto ex = estimate_stable_tau(sys, StableSubset::explicit_block);
    EXPECT_NEAR(all.tau, 0.02, 1e-7);
    EXPECT_NEAR(ex.tau, 0.5, 1e-6);
    EXPECT_EQ(ex.dofs, 2);

    sys.implicit_rows.assign(3, true);
    EXPECT_TRUE(std::isinf(estimate_stable_tau(sys, StableSubset::explicit_block).tau));
}
