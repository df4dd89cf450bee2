#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace hlsd;

TEST(StructuredMesh, CountsMatchClosedForm)
{
    const auto m1 = build_structured_mesh(1, 1);
    EXPECT_EQ(m1.element_count(), 2);
    EXPECT_EQ(m1.face_count(), 5);
    const auto m2 = build_structured_mesh(2, 2);
    EXPECT_EQ(m2.element_count(), 8);
    EXPECT_EQ(m2.face_count(), 16);
    const auto m4 = build_structured_mesh(4, 4);
    EXPECT_EQ(m4.element_count(), 32);
    EXPECT_EQ(m4.face_count(), 56);
    for (Index nx : {1, 3, 5})
        for (Index ny : {1, 2, 7}) {
            const auto m = build_structured_mesh(nx, ny, {0, 0, 2, 3});
            EXPECT_EQ(m.element_count(), 2 * nx * ny);
            EXPECT_EQ(m.face_count(), 3 * nx * ny + nx + ny);
        }
}

TEST(StructuredMesh, RejectsBadDimensions)
{
    for (auto [nx, ny] : {std::pair<Index, Index>{0, 1}, {1, 0}, {-2, 3}}) {
        try {
            build_structured_mesh(nx, ny);
            FAIL() << "expected an error";
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
        }
    }
    EXPECT_THROW(build_structured_mesh(2, 2, {0, 0, 0, 1}), Error);
    EXPECT_THROW(build_structured_mesh(2, 2, {0, 1, 1, 0}), Error);
}

TEST(StructuredMesh, FaceInvariants)
{
    const auto m = build_structured_mesh(3, 4, {0, 0, 1.5, 2});
    std::vector<int> incidence(std::size_t(m.face_count()), 0);
    for (Index e = 0; e < m.element_count(); ++e) {
        EXPECT_GT(m.area(e), 0);
        const auto& t = m.element(e);
        EXPECT_LT(CoarseMesh::shape_ratio(m.vertex(t[0]), m.vertex(t[1]), m.vertex(t[2])),
                  CoarseMesh::default_shape_bound);
        for (int k = 0; k < 3; ++k)
            ++incidence[std::size_t(m.element_face(e, k))];
    }
    for (Index f = 0; f < m.face_count(); ++f) {
        const Face& face = m.face(f);
        EXPECT_EQ(incidence[std::size_t(f)], face.on_boundary() ? 1 : 2);
        EXPECT_NEAR(face.normal.norm(), 1.0, 1e-14);
        // n_F points out of the left element.
        const Point mid = 0.5 * (m.vertex(face.vertices[0]) + m.vertex(face.vertices[1]));
        EXPECT_GT(face.normal.dot(mid - m.centroid(face.left)), 0);
        if (face.right)
            EXPECT_LT(face.normal.dot(mid - m.centroid(*face.right)), 0);
        EXPECT_EQ(m.face_sign(face.left, f), 1.0);
    }
}

TEST(MeshFile, RoundTripAndErrors)
{
    const auto m = build_structured_mesh(2, 3);
    std::stringstream ss;
    write_mesh(ss, m);
    const auto back = parse_mesh(ss);
    EXPECT_EQ(back.element_count(), m.element_count());
    EXPECT_EQ(back.face_count(), m.face_count());
    for (Index v = 0; v < m.vertex_count(); ++v)
        EXPECT_EQ(back.vertex(v), m.vertex(v));

    std::istringstream bad("vertices 3\n0 0\n1 0\n0 x\nelements 1\n0 1 2\n");
    try {
        parse_mesh(bad);
        FAIL() << "expected a parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    std::istringstream degenerate("vertices 3\n0 0\n1 0\n2 0\nelements 1\n0 1 2\n");
    EXPECT_THROW(parse_mesh(degenerate), Error);
    std::istringstream sliver("vertices 3\n0 0\n1 0\n0.5 0.001\nelements 1\n0 1 2\n");
    EXPECT_THROW(parse_mesh(sliver), Error);
}

TEST(FinePartition, FaceCounts)
{
    const auto m = build_structured_mesh(1, 1);
    const auto p0 = refine_faces(m, 0);
    EXPECT_EQ(p0.subfaces(), 1);
    EXPECT_EQ(p0.fine_face_count(), m.face_count());
    const auto p2 = refine_faces(m, 2);
    EXPECT_EQ(p2.fine_face_count(), 20);
    EXPECT_EQ(p2.interior_level(), 3);
    EXPECT_THROW(refine_faces(m, -1), Error);
    EXPECT_THROW(refine_faces(m, 1, 0), Error);
}

TEST(FinePartition, SubFacesTileCoarseFaces)
{
    const auto m = build_structured_mesh(3, 2, {0, 0, 1, 0.7});
    const auto p = refine_faces(m, 3);
    for (Index f = 0; f < m.face_count(); ++f) {
        double sum = 0.0;
        for (Index k = 0; k < p.subfaces(); ++k)
            sum += p.fine_face_length(p.fine_face(f, k));
        EXPECT_NEAR(sum, m.face(f).length, 1e-12 * m.face(f).length);
    }
}

TEST(FinePartition, InteriorBoundaryMatchesSubFaces)
{
    // Every slot's boundary segments lie on its coarse edge and cover exactly the sub-face interval.
    const auto m = build_structured_mesh(2, 2);
    const auto p = refine_faces(m, 3);
    const Index s = p.subfaces();
    for (Index e = 0; e < m.element_count(); ++e)
        for (Index q = 0; q < p.slots_per_element(); ++q) {
            const Index a = p.slot_face(e, q);
            const Face& face = m.face(p.coarse_face_of(a));
            const Point v0 = m.vertex(face.vertices[0]), v1 = m.vertex(face.vertices[1]);
            const Index k = a % s;
            const Point lo = v0 + double(k) / double(s) * (v1 - v0);
            const Point hi = v0 + double(k + 1) / double(s) * (v1 - v0);
            double covered = 0.0;
            for (const auto& seg : p.slot_segments(q)) {
                const Point x0 = p.node_position(m, e, seg[0]), x1 = p.node_position(m, e, seg[1]);
                for (const Point& x : {x0, x1}) {
                    // on the segment [lo, hi]
                    const double t = (x - lo).dot(hi - lo) / (hi - lo).squaredNorm();
                    EXPECT_NEAR((lo + t * (hi - lo) - x).norm(), 0.0, 1e-14);
                    EXPECT_GE(t, -1e-12);
                    EXPECT_LE(t, 1 + 1e-12);
                }
                covered += (x1 - x0).norm();
            }
            EXPECT_NEAR(covered, p.fine_face_length(a), 1e-13);
        }
}

TEST(FinePartition, ElementSidesAreOpposite)
{
    const auto m = build_structured_mesh(3, 3);
    const auto p = refine_faces(m, 2);
    std::vector<double> sum(std::size_t(p.fine_face_count()), 0.0);
    std::vector<int> count(sum.size(), 0);
    for (Index e = 0; e < m.element_count(); ++e)
        for (Index q = 0; q < p.slots_per_element(); ++q) {
            sum[std::size_t(p.slot_face(e, q))] += p.slot_sign(e, q);
            ++count[std::size_t(p.slot_face(e, q))];
        }
    for (Index a = 0; a < p.fine_face_count(); ++a) {
        if (count[std::size_t(a)] == 2)
            EXPECT_EQ(sum[std::size_t(a)], 0.0);
        else
            EXPECT_EQ(sum[std::size_t(a)], 1.0);
    }
}

namespace {

/// Brute-force closure-intersection layers: compare vertex sets element by element.
std::set<Index> brute_layers(const CoarseMesh& m, std::set<Index> start, int j)
{
    if (j == 0)
        return {};
    std::set<Index> cur = std::move(start);
    for (int l = 1; l < j; ++l) {
        std::set<Index> next = cur;
        for (Index a = 0; a < m.element_count(); ++a)
            for (Index b : cur) {
                bool touch = false;
                for (Index va : m.element(a))
                    for (Index vb : m.element(b))
                        touch = touch || (m.vertex(va) - m.vertex(vb)).norm() < 1e-14;
                if (touch)
                    next.insert(a);
            }
        cur = next;
    }
    return cur;
}

} // namespace

TEST(ElementLayers, SeedsAndBruteForce)
{
    const auto m = build_structured_mesh(4, 4);
    EXPECT_TRUE(element_layers(m, Seed::element(5), 0).elements.empty());
    EXPECT_EQ(element_layers(m, Seed::element(5), 1).elements, std::vector<Index>{5});
    const Face& f = m.face(7);
    auto t1 = element_layers(m, Seed::face(7), 1).elements;
    std::vector<Index> expect{f.left};
    if (f.right)
        expect.push_back(*f.right);
    std::sort(expect.begin(), expect.end());
    EXPECT_EQ(t1, expect);

    // Corner element (containing the origin).
    Index corner = nearest_element(m, Point(0.02, 0.02));
    for (int j = 0; j <= 5; ++j) {
        const auto got = element_layers(m, Seed::element(corner), j).elements;
        const auto want = brute_layers(m, {corner}, j);
        EXPECT_EQ(std::set<Index>(got.begin(), got.end()), want) << "j=" << j;
    }
    for (Index face = 0; face < m.face_count(); face += 5) {
        const Face& fc = m.face(face);
        std::set<Index> start{fc.left};
        if (fc.right)
            start.insert(*fc.right);
        for (int j = 1; j <= 3; ++j) {
            const auto got = element_layers(m, Seed::face(face), j).elements;
            EXPECT_EQ(std::set<Index>(got.begin(), got.end()), brute_layers(m, start, j));
        }
    }
}

TEST(ElementLayers, NestingAndSaturation)
{
    const auto m = build_structured_mesh(5, 3);
    for (Index e = 0; e < m.element_count(); e += 3) {
        const int sat = saturation_layer(m, Seed::element(e));
        EXPECT_LE(sat, m.element_count());
        EXPECT_EQ(Index(element_layers(m, Seed::element(e), sat).size()), m.element_count());
        for (int j = 0; j < sat + 2; ++j) {
            const auto a = element_layers(m, Seed::element(e), j);
            const auto b = element_layers(m, Seed::element(e), j + 1);
            EXPECT_TRUE(std::includes(b.elements.begin(), b.elements.end(), a.elements.begin(), a.elements.end()));
            if (j >= 1 && Index(a.size()) < m.element_count())
                EXPECT_GT(b.size(), a.size());
        }
    }
    EXPECT_GE(mesh_saturation_layer(m), saturation_layer(m, Seed::element(0)));
}

TEST(ElementLayers, UnknownSeed)
{
    const auto m = build_structured_mesh(2, 2);
    EXPECT_THROW(element_layers(m, Seed::element(8), 1), Error);
    EXPECT_THROW(element_layers(m, Seed::face(-1), 1), Error);
    EXPECT_THROW(element_layers(m, Seed::element(0), -1), Error);
}

TEST(ElementLayers, InteriorFacesHaveAllNeighboursInside)
{
    const auto m = build_structured_mesh(4, 4);
    const auto set = element_layers(m, Seed::element(10), 2);
    for (Index f : interior_faces_of(m, set)) {
        EXPECT_TRUE(set.contains(m.face(f).left));
        if (m.face(f).right)
            EXPECT_TRUE(set.contains(*m.face(f).right));
    }
}
