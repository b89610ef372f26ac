//! Plain DBSCAN over an abstract distance, O(n^2), adequate for track-sized
//! inputs.

/// Cluster indices `0..n` with DBSCAN. Returns clusters in order of their
/// lowest member index; points in no cluster are noise.
pub fn dbscan<F>(n: usize, eps: f64, min_pts: usize, dist: F) -> Vec<Vec<usize>>
where
    F: Fn(usize, usize) -> f64,
{
    let mut label = vec![UNVISITED; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();

    let neighbors = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| dist(i, j) <= eps).collect()
    };

    for i in 0..n {
        if label[i] != UNVISITED {
            continue;
        }
        let nb = neighbors(i);
        if nb.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let cluster_id = clusters.len() as isize;
        label[i] = cluster_id;
        let mut members = vec![i];
        let mut queue = nb;
        let mut qi = 0;
        while qi < queue.len() {
            let j = queue[qi];
            qi += 1;
            if label[j] == NOISE {
                label[j] = cluster_id;
                members.push(j);
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = cluster_id;
            members.push(j);
            let nb_j = neighbors(j);
            if nb_j.len() >= min_pts {
                queue.extend(nb_j);
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

const UNVISITED: isize = -2;
const NOISE: isize = -1;

/// Largest cluster; ties broken by the smallest first-member index.
pub fn dominant<'a>(clusters: &'a [Vec<usize>]) -> Option<&'a Vec<usize>> {
    clusters
        .iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
}
