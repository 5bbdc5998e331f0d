//! Small deterministic source databases and query sets used by the test
//! suites and by the demo commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rusqlite::{params, Connection};
use xdialect_core::{BenchmarkSpec, Dialect, Example};

fn fresh(path: &Path) -> rusqlite::Result<Connection> {
    if path.exists() {
        let _ = std::fs::remove_file(path);
    }
    let conn = Connection::open(path)?;
    // Dirty rows must be insertable; the bundled engine enforces keys by default.
    conn.execute_batch("PRAGMA foreign_keys = OFF")?;
    Ok(conn)
}

/// Rows that violate declared foreign keys, awkward text for bulk loaders,
/// extreme integers, blobs, duplicate rows and an empty table.
pub fn write_fk_dirty_db(path: &Path) -> rusqlite::Result<()> {
    let conn = fresh(path)?;
    conn.execute_batch(
        "CREATE TABLE parent(id INTEGER PRIMARY KEY, name TEXT NOT NULL UNIQUE);
         CREATE TABLE child(
             id INTEGER PRIMARY KEY,
             parent_id INTEGER REFERENCES parent(id),
             amount REAL,
             score REAL,
             code TEXT,
             payload BLOB,
             flag BOOLEAN,
             big INTEGER
         );
         CREATE TABLE log(msg TEXT, level INTEGER);
         CREATE TABLE empty_t(a INTEGER, b TEXT);
         CREATE TABLE \"MixedCase\"(\"Value\" INTEGER, \"Label\" TEXT);",
    )?;
    let tx = conn.unchecked_transaction()?;
    for (id, name) in [(1, "alpha"), (2, "beta"), (3, "gamma"), (4, "delta"), (5, "epsilon")] {
        tx.execute("INSERT INTO parent VALUES (?1, ?2)", params![id, name])?;
    }
    let codes = [
        "plain",
        "",
        "comma, inside",
        "quote \" and 'single'",
        "line\nbreak",
        "back\\slash",
        "NULL",
        "\\N",
        "unicode: café ☕ 日本",
        "  padded  ",
        "tab\there",
    ];
    let amounts = [0.1, -2.5, 1e-7, 1e15, 3.0, 123.456, -0.0, 2.0 / 3.0];
    for i in 1..=30i64 {
        let parent = match i % 10 {
            3 => Some(42),   // no such parent
            7 => Some(77),   // no such parent
            9 => None,
            _ => Some(i % 5 + 1),
        };
        let score: rusqlite::types::Value = if i == 13 { "".to_string().into() } else { (i as f64 / 4.0).into() };
        let payload: Option<Vec<u8>> = (i % 4 != 0).then(|| vec![0u8, i as u8, 0xff, b'\n']);
        let big = match i {
            1 => i64::MAX,
            2 => i64::MIN,
            _ => i * 1_000_003,
        };
        tx.execute(
            "INSERT INTO child VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            params![
                i,
                parent,
                (i % 6 != 5).then(|| amounts[i as usize % amounts.len()]),
                score,
                codes[i as usize % codes.len()],
                payload,
                i % 2,
                big
            ],
        )?;
    }
    for (msg, level) in [("start", 1), ("start", 1), ("dup", 2), ("dup", 2), ("dup", 2), ("end", 3)] {
        tx.execute("INSERT INTO log VALUES (?1, ?2)", params![msg, level])?;
    }
    for (v, l) in [(1, "One"), (2, "Two")] {
        tx.execute("INSERT INTO \"MixedCase\" VALUES (?1, ?2)", params![v, l])?;
    }
    tx.commit()
}

/// Text columns holding ISO dates and timestamps next to columns that
/// must stay text, plus declared temporal and decimal columns.
pub fn write_iso_dates_db(path: &Path) -> rusqlite::Result<()> {
    let conn = fresh(path)?;
    conn.execute_batch(
        "CREATE TABLE events(
             id INTEGER PRIMARY KEY,
             day TEXT,
             at TEXT,
             label TEXT,
             blank TEXT,
             price DECIMAL(10,2),
             declared_day DATE,
             stamp DATETIME
         );",
    )?;
    let days = ["2021-01-05", "2020-02-29", "1999-12-31", "2038-01-19", "2000-01-01", "1970-01-01"];
    let stamps = [
        "2021-01-05 10:30:00",
        "2020-02-29T23:59:59.5",
        "1999-12-31 00:00:00.123456",
        "2038-01-19T03:14:07",
        "2000-01-01 12:00:00.25",
        "1970-01-01 00:00:01",
    ];
    let labels = ["2021-01-05", "n/a", "launch", "2020-02-29", "", "TBD"];
    let tx = conn.unchecked_transaction()?;
    for i in 0..24usize {
        let day = (i % 7 != 6).then(|| days[i % days.len()]);
        let at = (i % 5 != 4).then(|| stamps[(i * 5) % stamps.len()]);
        let price = (i as f64 * 3.25).round() / 4.0 + 0.01;
        tx.execute(
            "INSERT INTO events VALUES (?1, ?2, ?3, ?4, NULL, ?5, ?6, ?7)",
            params![i as i64 + 1, day, at, labels[i % labels.len()], price, days[(i + 2) % days.len()], stamps[(i + 3) % stamps.len()]],
        )?;
    }
    tx.commit()
}

/// Shop database behind the mini benchmark: customers with ISO join
/// dates, products with decimal prices, and orders with ISO timestamps,
/// some pointing at customers that do not exist.
pub fn write_shop_db(path: &Path) -> rusqlite::Result<()> {
    let conn = fresh(path)?;
    conn.execute_batch(
        "CREATE TABLE customers(id INTEGER PRIMARY KEY, name TEXT, city TEXT, joined TEXT, vip BOOLEAN);
         CREATE TABLE products(id INTEGER PRIMARY KEY, title TEXT, category TEXT, price DECIMAL(10,2), weight REAL);
         CREATE TABLE orders(
             id INTEGER PRIMARY KEY,
             customer_id INTEGER REFERENCES customers(id),
             product_id INTEGER REFERENCES products(id),
             qty INTEGER,
             ordered_at TEXT,
             note TEXT
         );",
    )?;
    let tx = conn.unchecked_transaction()?;
    let customers: [(i64, &str, Option<&str>, &str, i64); 8] = [
        (1, "Alice", Some("Paris"), "2019-03-14", 1),
        (2, "Bob", Some("Lyon"), "2020-01-02", 0),
        (3, "Chloé", Some("Paris"), "2020-07-21", 1),
        (4, "Dmitri", None, "2021-02-11", 0),
        (5, "Eve", Some("Berlin"), "2018-11-30", 0),
        (6, "Farid", Some("Lyon"), "2020-05-05", 1),
        (7, "Gus", Some("Berlin"), "2021-09-09", 0),
        (8, "Hana", Some("Paris"), "2019-12-24", 0),
    ];
    for c in customers {
        tx.execute("INSERT INTO customers VALUES (?1, ?2, ?3, ?4, ?5)", params![c.0, c.1, c.2, c.3, c.4])?;
    }
    let products = [
        (1, "Lamp", "home", 19.99, 1.2),
        (2, "Desk", "home", 149.5, 20.0),
        (3, "Pen", "office", 1.25, 0.01),
        (4, "Paper", "office", 4.75, 2.5),
        (5, "Phone", "tech", 399.0, 0.2),
        (6, "Cable", "tech", 9.9, 0.1),
    ];
    for p in products {
        tx.execute("INSERT INTO products VALUES (?1, ?2, ?3, ?4, ?5)", params![p.0, p.1, p.2, p.3, p.4])?;
    }
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date").and_hms_opt(8, 0, 0).expect("valid time");
    for i in 1..=40i64 {
        let customer = match i {
            7 | 23 => Some(999),
            31 => None,
            _ => Some((i * 3) % 8 + 1),
        };
        let at = start + Duration::days(i * 17) + Duration::minutes(i * 37);
        let at = if i % 5 == 0 {
            format!("{}.250", at.format("%Y-%m-%d %H:%M:%S"))
        } else {
            at.format("%Y-%m-%d %H:%M:%S").to_string()
        };
        let note = match i % 3 {
            0 => None,
            1 => Some(""),
            _ => Some("gift"),
        };
        tx.execute(
            "INSERT INTO orders VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![i, customer, (i * 5) % 6 + 1, i % 4 + 1, at, note],
        )?;
    }
    tx.commit()
}

/// One mini-benchmark question: the gold query for the source engine and
/// a hand-checked PostgreSQL query with the same answer.
#[derive(Debug, Clone, Copy)]
pub struct MiniCase {
    pub id: i64,
    pub question: &'static str,
    pub sqlite: &'static str,
    pub postgres: &'static str,
}

pub const MINI_DB: &str = "shop";

pub const MINI_CASES: [MiniCase; 12] = [
    MiniCase {
        id: 0,
        question: "How many customers live in each city?",
        sqlite: "SELECT city, COUNT(*) FROM customers GROUP BY city",
        postgres: "SELECT city, COUNT(*) FROM customers GROUP BY city",
    },
    MiniCase {
        id: 1,
        question: "List the names of VIP customers alphabetically.",
        sqlite: "SELECT name FROM customers WHERE vip = 1 ORDER BY name",
        postgres: "SELECT name FROM customers WHERE vip ORDER BY name COLLATE \"C\"",
    },
    MiniCase {
        id: 2,
        question: "What is the revenue per product category?",
        sqlite: "SELECT p.category, SUM(o.qty * p.price) FROM orders o JOIN products p ON p.id = o.product_id GROUP BY p.category",
        postgres: "SELECT p.category, SUM(o.qty * p.price) FROM orders o JOIN products p ON p.id = o.product_id GROUP BY p.category",
    },
    MiniCase {
        id: 3,
        question: "What is the average product weight?",
        sqlite: "SELECT AVG(weight) FROM products",
        postgres: "SELECT AVG(weight) FROM products",
    },
    MiniCase {
        id: 4,
        question: "Which orders were placed in 2021?",
        sqlite: "SELECT id FROM orders WHERE strftime('%Y', ordered_at) = '2021'",
        postgres: "SELECT id FROM orders WHERE EXTRACT(YEAR FROM ordered_at) = 2021",
    },
    MiniCase {
        id: 5,
        question: "Who joined before June 2020, earliest first, and when?",
        sqlite: "SELECT name, joined FROM customers WHERE joined < '2020-06-01' ORDER BY joined",
        postgres: "SELECT name, joined FROM customers WHERE joined < DATE '2020-06-01' ORDER BY joined",
    },
    MiniCase {
        id: 6,
        question: "Which orders reference a customer that does not exist?",
        sqlite: "SELECT o.id FROM orders o LEFT JOIN customers c ON c.id = o.customer_id WHERE c.id IS NULL AND o.customer_id IS NOT NULL",
        postgres: "SELECT o.id FROM orders o LEFT JOIN customers c ON c.id = o.customer_id WHERE c.id IS NULL AND o.customer_id IS NOT NULL",
    },
    MiniCase {
        id: 7,
        question: "What are the three most expensive products?",
        sqlite: "SELECT title, price FROM products ORDER BY price DESC LIMIT 3",
        postgres: "SELECT title, price FROM products ORDER BY price DESC LIMIT 3",
    },
    MiniCase {
        id: 8,
        question: "In which month was each order placed?",
        sqlite: "SELECT id, strftime('%m', ordered_at) FROM orders ORDER BY id",
        postgres: "SELECT id, to_char(ordered_at, 'MM') FROM orders ORDER BY id",
    },
    MiniCase {
        id: 9,
        question: "Show each customer as name with city in parentheses.",
        sqlite: "SELECT name || ' (' || city || ')' FROM customers",
        postgres: "SELECT name || ' (' || city || ')' FROM customers",
    },
    MiniCase {
        id: 10,
        question: "What is half of each order quantity, rounded down?",
        sqlite: "SELECT id, qty / 2 FROM orders",
        postgres: "SELECT id, qty / 2 FROM orders",
    },
    MiniCase {
        id: 11,
        question: "Which customer ids have more than four orders?",
        sqlite: "SELECT customer_id, COUNT(*) AS n FROM orders GROUP BY customer_id HAVING COUNT(*) > 4",
        postgres: "SELECT customer_id, COUNT(*) AS n FROM orders GROUP BY customer_id HAVING COUNT(*) > 4",
    },
];

/// PostgreSQL queries that look plausible for a mini case but answer a
/// different question: (case id, query).
pub const MINI_WRONG: [(i64, &str); 6] = [
    (0, "SELECT city, COUNT(*) FROM customers WHERE city IS NOT NULL GROUP BY city"),
    (1, "SELECT name FROM customers WHERE NOT vip ORDER BY name COLLATE \"C\""),
    (2, "SELECT p.category, SUM(p.price) FROM orders o JOIN products p ON p.id = o.product_id GROUP BY p.category"),
    (4, "SELECT id FROM orders WHERE EXTRACT(YEAR FROM ordered_at) = 2020"),
    (6, "SELECT o.id FROM orders o JOIN customers c ON c.id = o.customer_id"),
    (7, "SELECT title, price FROM products ORDER BY price ASC LIMIT 3"),
];

/// Writes the shop database under `dir` and returns the benchmark over it.
pub fn write_mini_benchmark(dir: &Path) -> rusqlite::Result<BenchmarkSpec> {
    let db_dir = dir.join(MINI_DB);
    std::fs::create_dir_all(&db_dir).map_err(|e| rusqlite::Error::ToSqlConversionFailure(Box::new(e)))?;
    let db_path: PathBuf = db_dir.join(format!("{MINI_DB}.sqlite"));
    write_shop_db(&db_path)?;
    Ok(BenchmarkSpec {
        name: "mini".into(),
        source_dialect: Dialect::Sqlite,
        examples: MINI_CASES
            .iter()
            .map(|c| Example {
                id: c.id,
                question: c.question.into(),
                gold_sql: c.sqlite.into(),
                db_id: MINI_DB.into(),
                evidence: None,
            })
            .collect(),
        db_registry: BTreeMap::from([(MINI_DB.to_string(), db_path)]),
    })
}

/// Deterministic SELECTs over the shop database: projections, filters,
/// joins, aggregates, with and without ORDER BY and LIMIT.
pub fn shop_query_corpus() -> Vec<String> {
    let tables: [(&str, &[&str], &[&str]); 3] = [
        (
            "customers",
            &["id", "name", "city", "joined", "vip"],
            &["vip = 1", "city = 'Paris'", "city IS NULL", "joined >= '2020-01-01'", "name LIKE '%a%'", "id BETWEEN 2 AND 5"],
        ),
        (
            "products",
            &["id", "title", "category", "price", "weight"],
            &["price > 5", "category = 'tech'", "weight < 1", "title <> 'Pen'", "price * 2 > 20", "id IN (1, 3, 5)"],
        ),
        (
            "orders",
            &["id", "customer_id", "product_id", "qty", "ordered_at", "note"],
            &["qty > 2", "note = ''", "note IS NULL", "ordered_at < '2021-01-01'", "customer_id = 999", "product_id = 2"],
        ),
    ];
    let mut out = Vec::new();
    for (table, cols, filters) in tables {
        let projections: Vec<String> = std::iter::once("*".to_string())
            .chain(cols.iter().map(|c| c.to_string()))
            .chain(cols.windows(2).map(|w| format!("{}, {}", w[1], w[0])))
            .collect();
        for p in &projections {
            out.push(format!("SELECT {p} FROM {table}"));
            out.push(format!("SELECT {p} FROM {table} ORDER BY {} DESC", cols[0]));
        }
        for f in filters.iter() {
            out.push(format!("SELECT * FROM {table} WHERE {f}"));
            out.push(format!("SELECT {} FROM {table} WHERE {f} ORDER BY {}", cols[1], cols[0]));
            out.push(format!("SELECT COUNT(*) FROM {table} WHERE {f}"));
            out.push(format!("SELECT {} FROM {table} WHERE NOT ({f}) LIMIT 3", cols[0]));
        }
        for c in &cols[1..] {
            out.push(format!("SELECT MIN({c}), MAX({c}), COUNT({c}) FROM {table}"));
            out.push(format!("SELECT {c}, COUNT(*) FROM {table} GROUP BY {c}"));
            out.push(format!("SELECT DISTINCT {c} FROM {table}"));
            out.push(format!("SELECT COUNT(DISTINCT {c}) FROM {table}"));
            out.push(format!("SELECT {c}, id FROM {table} ORDER BY {c}, id"));
        }
    }
    out.extend(
        [
            "SELECT c.name, COUNT(o.id) FROM customers c LEFT JOIN orders o ON o.customer_id = c.id GROUP BY c.name",
            "SELECT c.name, p.title FROM orders o JOIN customers c ON c.id = o.customer_id JOIN products p ON p.id = o.product_id",
            "SELECT p.category, SUM(o.qty * p.price), AVG(p.weight) FROM orders o JOIN products p ON p.id = o.product_id GROUP BY p.category",
            "SELECT o.id FROM orders o LEFT JOIN customers c ON c.id = o.customer_id WHERE c.id IS NULL",
            "SELECT city, AVG(id) FROM customers GROUP BY city ORDER BY city",
            "SELECT name || ' from ' || city FROM customers",
            "SELECT id, qty / 3, qty % 3 FROM orders",
            "SELECT substr(ordered_at, 1, 7) AS month, COUNT(*) FROM orders GROUP BY month",
            "SELECT title, ROUND(price * 1.2, 2) FROM products",
            "SELECT CASE WHEN price > 10 THEN 'big' ELSE 'small' END AS size, COUNT(*) FROM products GROUP BY size",
            "SELECT (SELECT COUNT(*) FROM orders), (SELECT COUNT(*) FROM customers)",
            "SELECT id FROM orders WHERE product_id IN (SELECT id FROM products WHERE category = 'home')",
        ]
        .map(String::from),
    );
    out
}
