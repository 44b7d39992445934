const http = require('http');

const signupPage = `<!doctype html>
<html>
<head><title>Join us</title></head>
<body>
<h1>Create your account</h1>
<form method="post" action="/signup">
  <label for="name">Name</label>
  <input id="name" name="name" type="text">
  <label for="email">Email</label>
  <input id="email" name="email" type="text">
  <button type="submit">Create account</button>
</form>
</body>
</html>
`;

const received = `<!doctype html>
<html>
<head><title>Join us</title></head>
<body>
<p>Registration received.</p>
</body>
</html>
`;

const server = http.createServer((req, res) => {
  if (req.method === 'POST' && req.url === '/signup') {
    let body = '';
    req.on('data', (chunk) => { body += chunk; });
    req.on('end', () => {
      res.writeHead(200, { 'Content-Type': 'text/html' });
      res.end(received);
    });
    return;
  }
  res.writeHead(200, { 'Content-Type': 'text/html' });
  res.end(signupPage);
});

server.listen(process.env.PORT || 3000);
