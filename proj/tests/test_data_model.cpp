#include "mesreg/data_model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace mesreg;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / ("mesreg_dm_" + name);
    std::ofstream(path) << content;
    return path;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::numeric;
}

Dataset small_linear() {
    MatrixXd z(6, 2);
    z << 1, 0.5, 1, 1.5, 1, -0.2, 1, 2.0, 1, 0.1, 1, 0.7;
    VectorXd y(6), x(6);
    y << 1, 2, 3, 4, 5, 6;
    x << 2, 1, 4, 3, 6, 5;
    Dataset d = make_dataset(y, x, z, z);
    d.intercept_v = d.intercept_m = true;
    return d;
}

}  // namespace

TEST(LoadCsv, ThreeRowsWithInterceptAndCovariate) {
    const auto path = temp_file("three.csv", "y,x,z1\n1,2,3\n4,5,6\n7,8,9\n");
    const Dataset d = load_csv(path.string(), {"y", "x", {"1", "z1"}, {"1", "z1"}});
    EXPECT_EQ(d.n(), 3);
    EXPECT_EQ(d.z_v.cols(), 2);
    EXPECT_EQ(d.z_m.cols(), 2);
    EXPECT_TRUE(d.intercept_v);
    EXPECT_DOUBLE_EQ(d.z_m(2, 1), 9.0);
    // Three rows cannot carry p + q = 4 parameters; estimation-time validation rejects it.
    EXPECT_EQ(code_of([&] { validate(d, ModelSpec::linear(0.9, d)); }), ErrorCode::dimension);
}

TEST(LoadCsv, HeaderOnlyIsDimensionError) {
    const auto path = temp_file("header_only.csv", "y,x,z1\n");
    EXPECT_EQ(code_of([&] { load_csv(path.string(), {"y", "x", {"1"}, {"1"}}); }), ErrorCode::dimension);
}

TEST(LoadCsv, InterceptPrependedAndCovariatesKept) {
    std::string text = "y,x,z1\n";
    for (int t = 0; t < 8; ++t) text += std::to_string(t) + "," + std::to_string(2 * t) + "," + std::to_string(t % 3) + "\n";
    const Dataset d = load_csv(temp_file("eight.csv", text).string(), {"y", "x", {"1", "z1"}, {"1", "z1"}});
    EXPECT_EQ(d.z_v.cols(), 2);
    EXPECT_TRUE((d.z_v.col(0).array() == 1.0).all());
    EXPECT_DOUBLE_EQ(d.z_v(4, 1), 1.0);
    EXPECT_EQ(d.z_v_names, (std::vector<std::string>{"const", "z1"}));
}

TEST(LoadCsv, NanNamesTheRow) {
    std::string text = "y,x,z1\n";
    for (int t = 1; t <= 10; ++t) text += (t == 7 ? std::string("NaN") : std::to_string(t)) + ",1,2\n";
    try {
        load_csv(temp_file("nan.csv", text).string(), {"y", "x", {"1"}, {"1"}});
        FAIL() << "expected a parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::parse);
        EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos) << e.what();
    }
}

TEST(LoadCsv, NonNumericCellIsParseError) {
    const auto path = temp_file("text.csv", "y,x\n1,2\nabc,3\n4,5\n6,7\n");
    EXPECT_EQ(code_of([&] { load_csv(path.string(), {"y", "x", {"1"}, {"1"}}); }), ErrorCode::parse);
}

TEST(LoadCsv, MissingColumnIsSchemaError) {
    const auto path = temp_file("missing.csv", "y,x\n1,2\n3,4\n5,6\n7,8\n");
    EXPECT_EQ(code_of([&] { load_csv(path.string(), {"y", "x", {"1", "z9"}, {"1"}}); }), ErrorCode::schema);
}

TEST(LoadCsv, MissingFileIsIoError) {
    EXPECT_EQ(code_of([] { load_csv("/nonexistent/none.csv", {"y", "x", {"1"}, {"1"}}); }), ErrorCode::io);
}

TEST(LoadCsv, InterceptOnlySchema) {
    std::string text = "y,x\n";
    for (int t = 0; t < 100; ++t) text += std::to_string(t) + "," + std::to_string(100 - t) + "\n";
    const Dataset d = load_csv(temp_file("hundred.csv", text).string(), {"y", "x", {"1"}, {"1"}});
    EXPECT_EQ(d.n(), 100);
    EXPECT_EQ(d.z_v.cols(), 1);
    EXPECT_EQ(d.z_m.cols(), 1);
    EXPECT_TRUE((d.z_v.array() == 1.0).all());
    EXPECT_TRUE((d.z_m.array() == 1.0).all());
}

TEST(LoadCsv, RoundTripIsBitExact) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    VectorXd y(40), x(40);
    MatrixXd z(40, 3);
    for (int t = 0; t < 40; ++t) {
        y(t) = normal(rng) * 1e3;
        x(t) = std::exp(normal(rng) * 20.0);
        z.row(t) << 1.0, normal(rng) / 7.0, normal(rng) * 1e-9;
    }
    Dataset d = make_dataset(y, x, z, z.leftCols(2));
    d.intercept_v = d.intercept_m = true;
    d.z_v_names = {"const", "a", "b"};
    d.z_m_names = {"const", "a"};
    const auto path = std::filesystem::temp_directory_path() / "mesreg_dm_roundtrip.csv";
    write_csv(d, path.string());
    const Dataset back = load_csv(path.string(), written_schema(d));
    write_csv(back, path.string() + ".2");
    const Dataset again = load_csv(path.string() + ".2", written_schema(back));
    for (const Dataset* r : {&back, &again}) {
        EXPECT_TRUE((r->y.array() == d.y.array()).all());
        EXPECT_TRUE((r->x.array() == d.x.array()).all());
        EXPECT_TRUE((r->z_v.array() == d.z_v.array()).all());
        EXPECT_TRUE((r->z_m.array() == d.z_m.array()).all());
    }
}

TEST(Validate, ConsistentLinearSpecPasses) {
    const Dataset d = small_linear();
    EXPECT_NO_THROW(validate(d, ModelSpec::linear(0.9, d)));
}

TEST(Validate, DimensionMismatchIsDimensionError) {
    const Dataset d = small_linear();
    ModelSpec spec = ModelSpec::linear(0.9, d);
    spec.p = 3;
    EXPECT_EQ(code_of([&] { validate(d, spec); }), ErrorCode::dimension);
}

TEST(Validate, BetaOneIsLevelError) {
    const Dataset d = small_linear();
    EXPECT_EQ(code_of([&] { validate(d, ModelSpec::linear(1.0, d)); }), ErrorCode::level);
    EXPECT_EQ(code_of([&] { validate(d, ModelSpec::linear(0.0, d)); }), ErrorCode::level);
}

TEST(Validate, NonFiniteRejected) {
    Dataset d = small_linear();
    d.x(2) = std::numeric_limits<double>::infinity();
    EXPECT_EQ(code_of([&] { validate(d, ModelSpec::linear(0.9, d)); }), ErrorCode::non_finite);
}

TEST(Validate, InterceptColumnMustBeOnes) {
    Dataset d = small_linear();
    d.z_v(3, 0) = 2.0;
    EXPECT_EQ(code_of([&] { validate(d, ModelSpec::linear(0.9, d)); }), ErrorCode::schema);
}

TEST(Validate, TooFewRows) {
    Dataset d = small_linear();
    MatrixXd z = MatrixXd::Ones(6, 3);
    z.col(1) << 1, 2, 3, 4, 5, 6;
    z.col(2) << 1, 0, 1, 0, 1, 1;
    d.z_v = d.z_m = z;
    EXPECT_EQ(code_of([&] { validate(d, ModelSpec::linear(0.9, d)); }), ErrorCode::dimension);
}

TEST(Validate, CustomLinkContract) {
    const Dataset d = small_linear();
    ModelSpec spec = ModelSpec::linear(0.9, d);
    const auto value = [](const VectorXd& z, const VectorXd& th) { return th(0) + th(1) * z(1); };
    const auto gradient = [](const VectorXd& z, const VectorXd&) { return VectorXd{{1.0, z(1)}}; };
    spec.var_link = Link::custom(2, value, gradient, VectorXd::Zero(2));
    EXPECT_NO_THROW(validate(d, spec));

    spec.var_link = Link::custom(2, value, nullptr, VectorXd::Zero(2));
    EXPECT_EQ(code_of([&] { validate(d, spec); }), ErrorCode::link);

    const auto short_gradient = [](const VectorXd&, const VectorXd&) { return VectorXd::Ones(1); };
    spec.var_link = Link::custom(2, value, short_gradient, VectorXd::Zero(2));
    EXPECT_EQ(code_of([&] { validate(d, spec); }), ErrorCode::link);

    spec.var_link = Link::custom(2, value, gradient, VectorXd::Zero(3));
    EXPECT_EQ(code_of([&] { validate(d, spec); }), ErrorCode::link);
}

TEST(Validate, IsDeterministicAndSideEffectFree) {
    const Dataset d = small_linear();
    const Dataset copy = d;
    const ModelSpec spec = ModelSpec::linear(0.5, d);
    for (int k = 0; k < 3; ++k) EXPECT_NO_THROW(validate(d, spec));
    EXPECT_TRUE((d.y.array() == copy.y.array()).all());
    EXPECT_TRUE((d.z_v.array() == copy.z_v.array()).all());
}

TEST(SplitColumns, TrimsAndDropsEmpty) {
    EXPECT_EQ(split_columns("1, z1 ,z2,"), (std::vector<std::string>{"1", "z1", "z2"}));
}
