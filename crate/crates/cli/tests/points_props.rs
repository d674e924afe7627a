use proptest::prelude::*;
use sigrf_cli::points::parse_point_list;

proptest! {
    #[test]
    fn formatted_points_parse_back(
        pts in (1usize..5).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-1e6f64..1e6, d), 1..20)),
        comma in any::<bool>(),
    ) {
        let sep = if comma { ", " } else { "\t" };
        let text: String = pts
            .iter()
            .map(|p| p.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(sep) + "  # note\n")
            .collect();
        prop_assert_eq!(parse_point_list(&text).unwrap(), pts);
    }

    #[test]
    fn never_panics(text in "\\PC{0,200}") {
        let _ = parse_point_list(&text);
    }
}
